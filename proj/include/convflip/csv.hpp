#pragma once

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace convflip {

// Minimal RFC-4180 reader: quoted fields, escaped quotes, embedded commas and
// newlines. CRLF and LF line endings both accepted. Records are returned one
// at a time; `line` reports the record's starting line for diagnostics.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  int line() const { return record_line_; }

  std::optional<std::vector<std::string>> next() {
    if (!peek_ok()) return std::nullopt;
    record_line_ = line_;
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    while (true) {
      int ci = in_.get();
      if (ci == EOF) {
        if (quoted) throw std::runtime_error("line " + std::to_string(record_line_) +
                                             ": unterminated quoted field");
        fields.push_back(std::move(field));
        return fields;
      }
      char c = static_cast<char>(ci);
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') { in_.get(); field.push_back('"'); }
          else quoted = false;
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\r') {
        // swallow; newline handling below
      } else if (c == '\n') {
        ++line_;
        fields.push_back(std::move(field));
        return fields;
      } else {
        field.push_back(c);
      }
    }
  }

 private:
  bool peek_ok() { return in_.peek() != EOF; }

  std::istream& in_;
  int line_ = 1;
  int record_line_ = 1;
};

}  // namespace convflip
