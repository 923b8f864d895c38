#include "convflow/csv.hpp"

#include <charconv>
#include <cmath>

#include "convflow/error.hpp"

namespace convflow::csv {

std::optional<Row> Reader::next() {
  Row row;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  record_line_ = line_ + 1;
  char c;
  while (in_.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in_.peek() == '"') {
          in_.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else if (c == '\n') {
      ++line_;
      row.push_back(std::move(field));
      return row;
    } else {
      field.push_back(c);
    }
  }
  if (!any) return std::nullopt;
  row.push_back(std::move(field));
  return row;
}

Header::Header(const Row& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string n = names[i];
    if (i == 0 && n.starts_with("\xEF\xBB\xBF")) n.erase(0, 3);
    index_.emplace(std::move(n), i);
  }
}

std::optional<std::size_t> Header::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Header::require(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw InputError("missing required column '" + std::string(name) + "'");
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace convflow::csv
