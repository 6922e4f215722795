#include "xdecode/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "xdecode/image_io.hpp"
#include "xdecode/imaging.hpp"

namespace xdecode {

namespace fs = std::filesystem;

DatasetSpec DatasetSpec::with_defaults(fs::path root, DatasetKind kind, Split split,
                                       int image_size) {
  DatasetSpec spec;
  spec.root = std::move(root);
  spec.kind = kind;
  spec.split = split;
  if (kind == DatasetKind::kitti || kind == DatasetKind::cityscapes) {
    spec.preprocessing.push_back({PreprocessOp::Type::center_crop, 600, 0, 0});
  }
  spec.preprocessing.push_back({PreprocessOp::Type::resize, 0, image_size, image_size});
  return spec;
}

std::vector<fs::path> scan_corpus(const DatasetSpec& spec) {
  if (!fs::exists(spec.root) || !fs::is_directory(spec.root)) {
    throw Error(Errc::missing_root, "corpus root not found: " + spec.root.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(spec.root)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      files.push_back(entry.path());
    }
  }
  if (spec.kind == DatasetKind::gopro) {
    // GoPro trees keep blurred and sharp frames side by side; train on
    // the sharp ones when that layout is present.
    std::vector<fs::path> sharp_only;
    for (const auto& p : files) {
      if (p.parent_path().filename() == "sharp") sharp_only.push_back(p);
    }
    if (!sharp_only.empty()) files = std::move(sharp_only);
  }
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    return a.lexically_relative(spec.root).generic_string() <
           b.lexically_relative(spec.root).generic_string();
  });
  if (files.empty()) {
    throw Error(Errc::empty_corpus, "no images under " + spec.root.string());
  }
  return files;
}

ImageTensor preprocess(const ImageTensor& img, const DatasetSpec& spec) {
  ImageTensor out = img;
  for (const auto& op : spec.preprocessing) {
    switch (op.type) {
      case PreprocessOp::Type::center_crop:
        if (op.size > std::min(out.height, out.width)) {
          out = reflect_pad_to(out, op.size, op.size);
        }
        out = center_crop(out, op.size);
        break;
      case PreprocessOp::Type::resize:
        out = resize(out, op.h, op.w);
        break;
    }
  }
  return out;
}

std::vector<PairSample> make_batch(const std::vector<ImageTensor>& sharp,
                                   const CurriculumState& state, const MixingConfig& mix,
                                   BlurLevel floor, Rng& rng) {
  if (sharp.empty()) {
    throw Error(Errc::empty_batch, "make_batch: empty image list");
  }
  mix.validate();
  std::vector<PairSample> batch;
  batch.reserve(sharp.size());
  for (const ImageTensor& img : sharp) {
    PairSample sample;
    if (rng.uniform01() < mix.blur_percentage) {
      const BlurLevel k = sample_kernel(state.cap, floor, rng);
      sample.input = box_blur(img, k);
      sample.target = img;
      sample.is_sharp_pair = false;
      sample.kernel_used = k;
    } else {
      sample.input = img;
      sample.target = img;
      sample.is_sharp_pair = true;
    }
    batch.push_back(std::move(sample));
  }
  return batch;
}

// Flatten a corpus-relative path into a file stem: "a/b/img.png" -> "a__b__img".
static std::string stem_for(const fs::path& file, const fs::path& root) {
  fs::path rel = file.lexically_relative(root);
  rel.replace_extension();
  std::string s = rel.generic_string();
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    if (ch == '/') {
      out += "__";
    } else {
      out += ch;
    }
  }
  return out;
}

TestsetManifest generate_extreme_testset(const DatasetSpec& spec, const fs::path& out_dir,
                                         const std::vector<BlurLevel>& levels, uint64_t seed) {
  (void)seed;  // blur kernels are pinned per level, generation is seed-free
  if (levels.empty()) {
    throw Error(Errc::invalid_config, "gen-testset: empty level list");
  }
  const auto files = scan_corpus(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw Error(Errc::write_failed, "cannot create " + out_dir.string());
  }

  TestsetManifest manifest;
  manifest.dir = out_dir;
  std::vector<std::string> stems(files.size());
  for (size_t i = 0; i < files.size(); ++i) stems[i] = stem_for(files[i], spec.root);

  // Per-file work is independent; the manifest is assembled afterwards in
  // corpus order so the output is identical regardless of thread count.
  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(files.size()); ++i) {
    try {
      ImageTensor sharp = preprocess(load_image(files[i]), spec);
      // Snap to the 8-bit grid the PNG stores, so re-blurring the saved
      // sharp file reproduces the saved blurred files bit for bit.
      constexpr float kInv = 1.f / 255.f;
      for (float& v : sharp.data)
        v = static_cast<float>(std::clamp(std::lround(v * 255.f), 0L, 255L)) * kInv;
      save_image(sharp, out_dir / (stems[i] + "_sharp.png"));
      for (const BlurLevel level : levels) {
        save_image(box_blur(sharp, level),
                   out_dir / (stems[i] + "_bl" + std::to_string(level.value) + ".png"));
      }
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& stem : stems) {
    for (const BlurLevel level : levels) {
      manifest.rows.push_back(
          {stem + "_sharp.png", stem + "_bl" + std::to_string(level.value) + ".png", level.value});
    }
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void write_manifest(const TestsetManifest& manifest, const fs::path& csv_path) {
  std::ofstream f(csv_path);
  if (!f) throw Error(Errc::write_failed, "cannot write " + csv_path.string());
  f << "sharp_path,blurred_path,blur_level\n";
  for (const auto& row : manifest.rows) {
    f << row.sharp_path << "," << row.blurred_path << "," << row.blur_level << "\n";
  }
}

TestsetManifest read_manifest(const fs::path& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw Error(Errc::unreadable_file, "cannot read " + csv_path.string());
  TestsetManifest manifest;
  manifest.dir = csv_path.parent_path();
  std::string line;
  if (!std::getline(f, line) || line != "sharp_path,blurred_path,blur_level") {
    throw Error(Errc::bad_manifest, "bad manifest header in " + csv_path.string());
  }
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow row;
    std::string level;
    if (!std::getline(ss, row.sharp_path, ',') || !std::getline(ss, row.blurred_path, ',') ||
        !std::getline(ss, level)) {
      throw Error(Errc::bad_manifest, "bad manifest row: " + line);
    }
    row.blur_level = std::stoi(level);
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "gopro") return DatasetKind::gopro;
  if (s == "kitti") return DatasetKind::kitti;
  if (s == "cityscapes") return DatasetKind::cityscapes;
  if (s == "pascalvoc") return DatasetKind::pascalvoc;
  if (s == "flat_folder") return DatasetKind::flat_folder;
  throw Error(Errc::type_mismatch, "unknown dataset kind: " + s);
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gopro: return "gopro";
    case DatasetKind::kitti: return "kitti";
    case DatasetKind::cityscapes: return "cityscapes";
    case DatasetKind::pascalvoc: return "pascalvoc";
    case DatasetKind::flat_folder: return "flat_folder";
  }
  return "?";
}

}  // namespace xdecode
