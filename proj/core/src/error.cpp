#include "xdecode/error.hpp"

namespace xdecode {

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::config_parse:
    case Errc::unknown_key:
    case Errc::type_mismatch:
    case Errc::invalid_config:
      return 2;
    case Errc::invalid_blur_level:
    case Errc::unsupported_kernel:
    case Errc::crop_too_large:
    case Errc::invalid_resize:
    case Errc::unreadable_file:
    case Errc::unsupported_format:
    case Errc::write_failed:
    case Errc::missing_root:
    case Errc::empty_corpus:
    case Errc::empty_batch:
    case Errc::missing_file:
    case Errc::bad_manifest:
    case Errc::invalid_epoch:
    case Errc::invalid_range:
      return 3;
    case Errc::non_finite_loss:
    case Errc::checkpoint_io:
      return 4;
    case Errc::checkpoint_mismatch:
    case Errc::eval_failed:
      return 5;
  }
  return 1;
}

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::config_parse: return "config-parse";
    case Errc::unknown_key: return "unknown-key";
    case Errc::type_mismatch: return "type-mismatch";
    case Errc::invalid_config: return "invalid-config";
    case Errc::invalid_blur_level: return "invalid-blur-level";
    case Errc::unsupported_kernel: return "unsupported-kernel";
    case Errc::crop_too_large: return "crop-too-large";
    case Errc::invalid_resize: return "invalid-resize";
    case Errc::unreadable_file: return "unreadable-file";
    case Errc::unsupported_format: return "unsupported-format";
    case Errc::write_failed: return "write-failed";
    case Errc::missing_root: return "missing-root";
    case Errc::empty_corpus: return "empty-corpus";
    case Errc::empty_batch: return "empty-batch";
    case Errc::missing_file: return "missing-file";
    case Errc::bad_manifest: return "bad-manifest";
    case Errc::invalid_epoch: return "invalid-epoch";
    case Errc::invalid_range: return "invalid-range";
    case Errc::non_finite_loss: return "non-finite-loss";
    case Errc::checkpoint_io: return "checkpoint-io";
    case Errc::checkpoint_mismatch: return "checkpoint-mismatch";
    case Errc::eval_failed: return "eval-failed";
  }
  return "unknown";
}

}  // namespace xdecode
