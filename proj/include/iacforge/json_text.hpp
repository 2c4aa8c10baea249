#pragma once

#include <string>
#include <string_view>

namespace iacforge {

/// Minimal streaming writer for canonical JSON text. Canonical means:
/// compact (no whitespace), object keys emitted in the order the caller
/// chooses (callers sort where the format demands it), strings escaped the
/// same way on every platform, and numbers emitted as caller-provided
/// tokens so decimals never round-trip through IEEE doubles.
class JsonTextWriter {
 public:
  void begin_object() {
    comma();
    out_ += '{';
    first_ = true;
  }
  void end_object() {
    out_ += '}';
    first_ = false;
  }
  void begin_array() {
    comma();
    out_ += '[';
    first_ = true;
  }
  void end_array() {
    out_ += ']';
    first_ = false;
  }

  void key(std::string_view k) {
    comma();
    write_string(k);
    out_ += ':';
    first_ = true;  // next value follows the colon, no comma
  }

  void string(std::string_view s) {
    comma();
    write_string(s);
  }
  void raw_number(std::string_view canonical) {
    comma();
    out_ += canonical;
  }
  void boolean(bool b) {
    comma();
    out_ += b ? "true" : "false";
  }
  void null() {
    comma();
    out_ += "null";
  }

  [[nodiscard]] const std::string& str() const { return out_; }
  std::string take() { return std::move(out_); }

  static std::string escape(std::string_view s) {
    JsonTextWriter w;
    w.write_string(s);
    return w.take();
  }

 private:
  void comma() {
    if (!first_) out_ += ',';
    first_ = false;
  }

  void write_string(std::string_view s) {
    out_ += '"';
    for (unsigned char c : s) {
      switch (c) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\r': out_ += "\\r"; break;
        case '\t': out_ += "\\t"; break;
        default:
          if (c < 0x20) {
            static constexpr char hex[] = "0123456789abcdef";
            out_ += "\\u00";
            out_ += hex[c >> 4];
            out_ += hex[c & 0xf];
          } else {
            out_ += static_cast<char>(c);
          }
      }
    }
    out_ += '"';
  }

  std::string out_;
  bool first_ = true;
};

}  // namespace iacforge
