#include "convflow/text.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <utility>

#include "convflow/hash.hpp"

namespace convflow {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace text {
namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

constexpr std::string_view kEllipsis = "\xE2\x80\xA6";

const std::array<std::pair<std::string_view, std::string_view>, 8> kTypographic{{
    {"\xE2\x80\xA6", "..."},  // horizontal ellipsis
    {"\xE2\x80\x98", "'"},    // left single quote
    {"\xE2\x80\x99", "'"},    // right single quote
    {"\xE2\x80\x9C", "\""},   // left double quote
    {"\xE2\x80\x9D", "\""},   // right double quote
    {"\xE2\x80\x93", " - "},  // en dash
    {"\xE2\x80\x94", " - "},  // em dash
    {"\xC2\xA0", " "},        // no-break space
}};

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::string_view strip_closers(std::string_view s) {
  while (!s.empty()) {
    const char c = s.back();
    if (is_space(static_cast<unsigned char>(c)) || c == '"' || c == '\'' || c == ')' ||
        c == ']') {
      s.remove_suffix(1);
    } else if (s.ends_with("\xE2\x80\x9D") || s.ends_with("\xE2\x80\x99")) {
      s.remove_suffix(3);
    } else {
      break;
    }
  }
  return s;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (unsigned char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string join_fragments(std::span<const std::string> fragments) {
  std::string out;
  for (const auto& f : fragments) {
    auto piece = collapse_whitespace(f);
    if (piece.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += piece;
  }
  return out;
}

std::string asciify_punctuation(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    bool replaced = false;
    if (static_cast<unsigned char>(s[i]) >= 0x80) {
      for (const auto& [from, to] : kTypographic) {
        if (s.substr(i).starts_with(from)) {
          out += to;
          i += from.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(s[i++]);
  }
  return out;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view raw) {
  const std::string s = asciify_punctuation(raw);
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && (cur.back() == '\'' || cur.back() == '-')) cur.pop_back();
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else if ((c == '\'' || c == '-') && !cur.empty() && i + 1 < s.size() &&
               is_word_byte(static_cast<unsigned char>(s[i + 1]))) {
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

bool ends_with_ellipsis(std::string_view s) {
  s = strip_closers(s);
  return s.ends_with("...") || s.ends_with(kEllipsis);
}

bool ends_with_terminal(std::string_view s) {
  s = strip_closers(s);
  if (s.empty()) return false;
  const char c = s.back();
  if (c == '!' || c == '?') return true;
  if (c != '.') return false;
  return !s.ends_with("..");
}

}  // namespace text
}  // namespace convflow
