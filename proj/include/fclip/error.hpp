#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fclip {

/// Failure codes raised by the library. Each code maps onto one of three
/// coarse categories that the CLI turns into distinct exit statuses.
enum class Errc {
  invalid_argument,
  missing_file,
  size_mismatch,
  checksum_mismatch,
  label_out_of_range,
  invalid_manifest,
  missing_head,
  empty_input,
  stage_order,
  degenerate,
};

enum class ErrorCategory { usage, data, numeric };

constexpr ErrorCategory category_of(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::stage_order:
      return ErrorCategory::usage;
    case Errc::degenerate:
      return ErrorCategory::numeric;
    default:
      return ErrorCategory::data;
  }
}

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::missing_file: return "missing_file";
    case Errc::size_mismatch: return "size_mismatch";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::label_out_of_range: return "label_out_of_range";
    case Errc::invalid_manifest: return "invalid_manifest";
    case Errc::missing_head: return "missing_head";
    case Errc::empty_input: return "empty_input";
    case Errc::stage_order: return "stage_order";
    case Errc::degenerate: return "degenerate";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace fclip
