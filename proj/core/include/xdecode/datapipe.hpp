#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xdecode/image.hpp"
#include "xdecode/rng.hpp"
#include "xdecode/schedule.hpp"

namespace xdecode {

enum class DatasetKind { gopro, kitti, cityscapes, pascalvoc, flat_folder };
enum class Split { train, test };

// One geometric preprocessing step.
struct PreprocessOp {
  enum class Type { center_crop, resize } type;
  int size = 0;   // center_crop
  int h = 0;      // resize
  int w = 0;
};

struct DatasetSpec {
  std::filesystem::path root;
  DatasetKind kind = DatasetKind::flat_folder;
  Split split = Split::train;
  std::vector<PreprocessOp> preprocessing;

  // Canonical preprocessing for the kind: kitti/cityscapes get a 600
  // center crop before the resize, everything else resizes directly.
  static DatasetSpec with_defaults(std::filesystem::path root, DatasetKind kind,
                                   Split split, int image_size);
};

struct PairSample {
  ImageTensor input;
  ImageTensor target;
  bool is_sharp_pair = false;
  std::optional<BlurLevel> kernel_used;
};

struct MixingConfig {
  double blur_percentage = 0.90;  // fraction of sharp-blur pairs

  void validate() const {
    if (blur_percentage < 0.0 || blur_percentage > 1.0) {
      throw Error(Errc::invalid_config, "blur_percentage must be in [0, 1]");
    }
  }
};

// Recursive scan for image files under spec.root, sorted by relative
// path. For GoPro-style trees only files inside `sharp/` directories are
// kept (when any exist). Throws missing-root / empty-corpus.
std::vector<std::filesystem::path> scan_corpus(const DatasetSpec& spec);

// Apply the spec's preprocessing chain. Crops larger than the image
// reflect-pad first instead of failing.
ImageTensor preprocess(const ImageTensor& img, const DatasetSpec& spec);

// Bernoulli-mix a batch: each sharp image becomes a (blurred, sharp)
// pair with probability blur_percentage, otherwise a sharp-sharp pair.
// Kernels are drawn uniformly from {floor, ..., state.cap}.
std::vector<PairSample> make_batch(const std::vector<ImageTensor>& sharp,
                                   const CurriculumState& state, const MixingConfig& mix,
                                   BlurLevel floor, Rng& rng);

struct ManifestRow {
  std::string sharp_path;    // relative to the manifest directory
  std::string blurred_path;
  int blur_level = 0;
};

struct TestsetManifest {
  std::filesystem::path dir;
  std::vector<ManifestRow> rows;
};

// Offline test-set generation: for every corpus image and every level k
// writes `<stem>_bl<k>.png` (pinned k x k blur) next to `<stem>_sharp.png`,
// plus a manifest CSV. Output is byte-identical across runs with the
// same inputs.
TestsetManifest generate_extreme_testset(const DatasetSpec& spec,
                                         const std::filesystem::path& out_dir,
                                         const std::vector<BlurLevel>& levels, uint64_t seed);

inline std::vector<BlurLevel> default_extreme_levels() {
  return {BlurLevel{19}, BlurLevel{21}, BlurLevel{23}, BlurLevel{25}, BlurLevel{27}, BlurLevel{29}};
}

// Manifest CSV: header "sharp_path,blurred_path,blur_level".
void write_manifest(const TestsetManifest& manifest, const std::filesystem::path& csv_path);
TestsetManifest read_manifest(const std::filesystem::path& csv_path);

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind kind);

}  // namespace xdecode
