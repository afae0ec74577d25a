#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cemt/errors.hpp"
#include "cemt/rng.hpp"
#include "cemt/tensor.hpp"
#include "cemt/volume.hpp"

namespace cemt {

// ---------------------------------------------------------------------------
// Whole-file helpers shared by the IO layer. Both throw IoError.
// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// ---------------------------------------------------------------------------
// Dataset views
// ---------------------------------------------------------------------------

struct LabeledSample {
  std::uint64_t id = 0;
  Volume image;
  Volume mask;
};

// Carries no mask on purpose: the training loop's view of an unlabeled sample
// must not contain label data. Ground truth for held-out samples lives only
// in the on-disk dataset, where evaluation tooling can reach it.
struct UnlabeledSample {
  std::uint64_t id = 0;
  Volume image;
};

struct SplitSpec {
  int n_labeled = 0;
  int n_unlabeled = 0;
  std::uint64_t seed = 0;
};

struct SemiDataset {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  SplitSpec split_spec;
};

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

// Parameters of the synthetic blob dataset. Each sample starts from a smooth
// field summed over 2-4 random Gaussian bumps. The mask is the field
// thresholded at `threshold`, accepted only if its foreground fraction lands
// in [min_foreground, max_foreground]; the image is the min-max normalized
// field pushed through a per-volume appearance model (global contrast and
// brightness, a smooth multiplicative gain field, and a per-volume noise
// level centered on noise_sigma), quantized to float32 precision so that
// on-disk round trips are bit-exact.
struct GenConfig {
  std::uint64_t seed = 0;
  int count = 100;
  int dims = 2;
  std::array<int, 3> extent = {64, 64, 1};
  double noise_sigma = 0.5;
  double threshold = 0.5;
  double min_foreground = 0.05;
  double max_foreground = 0.60;
  int max_retries = 100;

  void validate() const;  // throws ConfigError
};

// Generates sample `index`. Fully determined by (cfg.seed, index): the draws
// come from Rng::stream(cfg.seed, index) in a fixed order. Throws
// GenerationRetryExceeded when no mask satisfies the foreground-fraction
// window within cfg.max_retries attempts.
LabeledSample generate_sample(const GenConfig& cfg, std::uint64_t index);

// The full pre-split pool: every sample labeled, unlabeled empty.
SemiDataset generate_synthetic(const GenConfig& cfg);
SemiDataset generate_synthetic(std::uint64_t seed, int count, std::array<int, 3> extent,
                               int dims);

// Deterministic Fisher-Yates shuffle of the pool followed by a prefix split:
// the first n_labeled samples keep their masks, the rest are stripped down to
// images. Throws SplitError if the pool is empty, already split, or
// n_labeled is outside [1, pool size].
SemiDataset split(const SemiDataset& pool, int n_labeled, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Patch sampling and augmentation
// ---------------------------------------------------------------------------

struct PatchBatch {
  std::vector<Tensor> labeled_images;
  std::vector<Tensor> labeled_masks;
  std::vector<Tensor> labeled_sdfs;
  std::vector<Tensor> unlabeled_images;
  std::array<int, 3> patch_shape = {0, 0, 1};
};

struct SamplerOptions {
  int n_labeled = 2;
  int n_unlabeled = 2;
  // When true, the SDF target is cropped out of a full-volume SDF instead of
  // being recomputed on the augmented patch. Cheaper, but wrong near crop
  // borders (cropping changes nearest-boundary distances); kept only for
  // comparison runs.
  bool sdf_from_full_volume = false;
};

// Single-channel tensor copy of a volume, and back. Both sides share the
// x-fastest layout, so these are plain copies.
Tensor volume_to_tensor(const Volume& v);
Volume tensor_to_volume(const Tensor& t, VolumeKind kind, int dims,
                        std::array<double, 3> spacing = {1.0, 1.0, 1.0});

// Axis-aligned crop: `corner` is the low corner, `patch` the extent taken
// along each axis. Throws ShapeError if the patch leaves the volume.
Tensor crop_patch(const Volume& v, std::array<int, 3> corner, std::array<int, 3> patch);

// Mirror along one spatial axis (0 = x, 1 = y, 2 = z). Applies to every
// channel. Throws DomainError for an invalid axis.
Tensor flipped(const Tensor& t, int axis);

// Rotate counterclockwise by `quarter_turns` right angles in the x-y plane
// (any integer; taken mod 4). One turn maps (x, y) to (ny-1-y, x) in the new
// frame and swaps the x/y extents.
Tensor rotated90(const Tensor& t, int quarter_turns);

// Draws a batch of augmented patches: per sample, a uniform random sample
// index, a uniform crop corner, independent axis flips, and an in-plane
// right-angle rotation (restricted to half turns for non-square patches),
// applied identically to every tensor of that sample. SDF targets are
// recomputed on the augmented mask patch unless opt.sdf_from_full_volume.
// All randomness comes from `rng` in a fixed draw order.
PatchBatch sample_batch(const SemiDataset& ds, std::array<int, 3> patch_shape, Rng& rng,
                        const SamplerOptions& opt = {});

// ---------------------------------------------------------------------------
// VSEG1 volume files
// ---------------------------------------------------------------------------

// Binary container: the magic bytes "VSEG1", a little-endian u32 header
// length, a JSON header (shape, spacing, kind, dtype, endianness), then the
// raw x-fastest voxel array. Binary masks are stored as uint8, everything
// else as little-endian float32.
//
// save_volume throws IoError on write failure and FormatError when a mask
// volume holds non-binary values. load_volume throws IoError when the file
// cannot be opened and FormatError for bad magic, malformed headers, or a
// payload whose byte count disagrees with the header.
void save_volume(const std::filesystem::path& path, const Volume& v);
Volume load_volume(const std::filesystem::path& path);

// Serialized VSEG1 bytes (what save_volume writes); exposed so the manifest
// can hash content without touching the filesystem.
std::string encode_volume(const Volume& v);
Volume decode_volume(const std::string& bytes, const std::string& origin);

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct SplitRequest {
  std::string name;  // e.g. "8"
  int n_labeled = 0;
  std::uint64_t seed = 0;
};

struct ManifestSample {
  std::uint64_t id = 0;
  std::string role;        // "train" or "test"
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;
  std::string image_sha256;
  std::string mask_sha256;
};

struct ManifestSplit {
  std::string name;
  int n_labeled = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> labeled_ids;
  std::vector<std::uint64_t> unlabeled_ids;
};

struct DatasetManifest {
  GenConfig gen;
  int test_count = 20;
  std::vector<ManifestSample> samples;
  std::vector<ManifestSplit> splits;
};

// Writes (or verifies) the dataset under `dir`: VSEG1 volumes plus
// dir/manifest.json. The last `test_count` samples are held out as the test
// set and never enter a split. Idempotent: files already on disk are
// hash-checked against the deterministic regeneration, and HashMismatch is
// thrown on any disagreement, so a clean re-run writes nothing.
DatasetManifest write_dataset(const std::filesystem::path& dir, const GenConfig& cfg,
                              int test_count, const std::vector<SplitRequest>& splits);

// Parses dir/manifest.json back. Throws IoError / FormatError.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

// Loads the training view of one named split, hash-verifying every volume.
// Unlabeled mask files stay untouched on disk. Throws ConfigError for an
// unknown split name, HashMismatch on tampered volumes.
SemiDataset load_split(const std::filesystem::path& manifest_path,
                       const std::string& split_name);

// Loads the held-out labeled test cases, hash-verified.
std::vector<LabeledSample> load_test_cases(const std::filesystem::path& manifest_path);

}  // namespace cemt
