#include "clids/tensor.hpp"

#include <algorithm>
#include <limits>

namespace clids {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + " expects a rank-2 tensor, got " +
                                       shape_string(t.shape()));
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.end(), T{0});
  // Loop orders keep the innermost access contiguous so the compiler can
  // vectorize; summation order is fixed for reproducibility.
  if (!trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av == T{0}) continue;
        const T* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b.data() + j * k;
        T acc{0};
        if (!trans_a) {
          const T* arow = a.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        } else {
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        }
        crow[j] += acc;
      }
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    fail(ErrorKind::ShapeMismatch,
         "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  auto out = Tensor<T>::zeros({a.dim(0), b.dim(1)});
  gemm<T>(false, false, a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), out.data(), true);
  return out;
}

template <typename T>
Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_at");
  require_rank2(b, "matmul_at");
  if (a.dim(0) != b.dim(0)) {
    fail(ErrorKind::ShapeMismatch,
         "matmul_at " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
  }
  auto out = Tensor<T>::zeros({a.dim(1), b.dim(1)});
  gemm<T>(true, false, a.dim(1), b.dim(1), a.dim(0), a.data(), b.data(), out.data(), true);
  return out;
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  if (a.dim(1) != b.dim(1)) {
    fail(ErrorKind::ShapeMismatch,
         "matmul_bt " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  auto out = Tensor<T>::zeros({a.dim(0), b.dim(0)});
  gemm<T>(false, true, a.dim(0), b.dim(0), a.dim(1), a.data(), b.data(), out.data(), true);
  return out;
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& t, std::size_t axis, Reduction op) {
  if (axis >= t.rank()) {
    fail(ErrorKind::AxisOutOfRange,
         "axis " + std::to_string(axis) + " for shape " + shape_string(t.shape()));
  }
  const Shape& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  std::vector<T> out(outer * inner);
  auto in = t.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      T acc = op == Reduction::Max ? -std::numeric_limits<T>::infinity() : T{0};
      for (std::size_t r = 0; r < len; ++r) {
        const T v = in[(o * len + r) * inner + i];
        acc = op == Reduction::Max ? std::max(acc, v) : acc + v;
      }
      if (op == Reduction::Mean) acc /= static_cast<T>(len);
      out[o * inner + i] = acc;
    }
  }
  return Tensor<T>(std::move(out_shape), std::move(out));
}

template <typename T>
Tensor<T> add_row_vector(const Tensor<T>& a, const Tensor<T>& row) {
  require_rank2(a, "add_row_vector");
  if (row.size() != a.dim(1)) {
    fail(ErrorKind::ShapeMismatch,
         "row vector " + shape_string(row.shape()) + " for " + shape_string(a.shape()));
  }
  Tensor<T> out = a;
  const std::size_t n = a.dim(1);
  auto d = out.data();
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < n; ++j) d[i * n + j] += row[j];
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return Tensor<T>({n, m}, std::move(out));
}

#define CLIDS_INSTANTIATE(T)                                                                 \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, std::span<const T>, \
                        std::span<const T>, std::span<T>, bool);                             \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> matmul_at<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul_bt<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> reduce<T>(const Tensor<T>&, std::size_t, Reduction);                    \
  template Tensor<T> add_row_vector<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> transpose<T>(const Tensor<T>&);

CLIDS_INSTANTIATE(float)
CLIDS_INSTANTIATE(double)
#undef CLIDS_INSTANTIATE

}  // namespace clids
