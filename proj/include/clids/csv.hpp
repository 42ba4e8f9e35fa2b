#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace clids::csv {

/// RFC 4180 record reader: comma separated, optional double-quoted fields
/// with "" escapes and embedded newlines, LF or CRLF line endings.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Next record, or nullopt at end of input. Blank lines are skipped.
  std::optional<std::vector<std::string>> next();

  /// 1-based physical line where the last returned record started.
  std::size_t line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
};

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

std::string_view trim(std::string_view s) noexcept;

/// Strict real-number parse of a whole (trimmed) field.
std::optional<double> parse_real(std::string_view field) noexcept;

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);

}  // namespace clids::csv
