#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace convflow::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
/// newlines. Tracks the physical line where each record starts.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::optional<Row> next();
  std::size_t line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

/// Header lookup by column name.
class Header {
 public:
  explicit Header(const Row& names);
  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws InputError naming the column when absent.
  std::size_t require(std::string_view name) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

std::string escape(std::string_view field);

void write_row(std::ostream& out, const Row& row);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace convflow::csv
