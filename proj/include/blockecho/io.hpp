#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"

namespace blockecho::io {

using numkern::Matrix;

// FNV-1a, used to fingerprint masks and inputs in reports.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

inline std::string file_checksum(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

inline std::string matrix_checksum(const Matrix& m) {
  std::string bytes(reinterpret_cast<const char*>(m.values().data()), m.size() * sizeof(double));
  bytes += std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  return hex64(fnv1a64(bytes));
}

// RFC-4180 record splitting: quoted fields may contain delimiters, doubled quotes and
// line breaks. Returns one vector of fields per record, with the 1-based line number
// each record started on.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<CsvRecord> split_csv(std::string_view text, char delimiter = ',') {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = 1;
  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r') {
      // swallowed; CRLF handled by '\n'
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field starting on line " +
                                  std::to_string(current.line));
  if (!field.empty() || !current.fields.empty()) end_record();
  return records;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NaN" || s == "nan" || s == "NAN" || s == "NA";
}

// Parses a finite number; returns false if the token is not entirely numeric.
inline bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

// Shortest representation that round-trips exactly.
inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("format_number failed");
  return {buf, ptr};
}

inline std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Writes values; cells where mask == 0 (when a mask is given) or NaN become empty.
inline std::string format_matrix_csv(const Matrix& values, const Matrix* mask = nullptr,
                                     const std::vector<std::string>* header = nullptr) {
  std::string out;
  if (header != nullptr && !header->empty()) {
    for (std::size_t j = 0; j < header->size(); ++j) {
      if (j) out += ',';
      out += quote_field((*header)[j]);
    }
    out += '\n';
  }
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      const bool missing = (mask != nullptr && (*mask)(i, j) == 0.0) || std::isnan(values(i, j));
      if (!missing) out += format_number(values(i, j));
    }
    out += '\n';
  }
  return out;
}

inline std::string format_mask_csv(const Matrix& mask) {
  std::string out;
  out.reserve(mask.size() * 2);
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (j) out += ',';
      out += mask(i, j) == 0.0 ? '0' : '1';
    }
    out += '\n';
  }
  return out;
}

}  // namespace blockecho::io
