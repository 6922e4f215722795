#pragma once

#include <stdexcept>
#include <string>

namespace xdecode {

// Failure categories. Each maps to a process exit code when it reaches
// the CLI boundary (see exit_code_for).
enum class Errc {
  // config / CLI
  config_parse,
  unknown_key,
  type_mismatch,
  invalid_config,
  // data & imaging
  invalid_blur_level,
  unsupported_kernel,
  crop_too_large,
  invalid_resize,
  unreadable_file,
  unsupported_format,
  write_failed,
  missing_root,
  empty_corpus,
  empty_batch,
  missing_file,
  bad_manifest,
  // schedule
  invalid_epoch,
  invalid_range,
  // training
  non_finite_loss,
  checkpoint_io,
  // evaluation
  checkpoint_mismatch,
  eval_failed,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

// CLI exit codes: 0 success, 2 config error, 3 data error,
// 4 training abort, 5 evaluation error.
int exit_code_for(Errc code);

const char* errc_name(Errc code);

}  // namespace xdecode
