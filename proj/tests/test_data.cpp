#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "cemt/data.hpp"
#include "cemt/geometry.hpp"
#include "cemt/hash.hpp"
#include "cemt/rng.hpp"

namespace fs = std::filesystem;
using namespace cemt;

namespace {

GenConfig small_cfg(std::uint64_t seed, int count) {
  GenConfig cfg;
  cfg.seed = seed;
  cfg.count = count;
  cfg.dims = 2;
  cfg.extent = {24, 24, 1};
  return cfg;
}

void flip_last_byte(const fs::path& p) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(bool(f));
  f.seekg(0, std::ios::end);
  const std::streamoff len = f.tellg();
  f.seekg(len - 1);
  char c = 0;
  f.get(c);
  f.seekp(len - 1);
  f.put(static_cast<char>(c ^ 0x1));
}

}  // namespace

TEST_CASE("hash: sha256 matches published vectors") {
  CHECK(sha256_hex(std::string()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // Lengths straddling the padding and block boundaries.
  CHECK(sha256_hex(std::string(55, 'a')) ==
        "9f4390f8d30c2dd92ec9f095b65e2b9ae9b0a925a5258e241c9f1e910f734318");
  CHECK(sha256_hex(std::string(56, 'a')) ==
        "b35439a4ac6f0948b6d6f9e3c6af0f5f590ce20f1bde7090ef7970686ec6738a");
  CHECK(sha256_hex(std::string(64, 'a')) ==
        "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
  CHECK(sha256_hex(std::string(119, 'a')) ==
        "31eba51c313a5c08226adf18d4a359cfdfd8d2e816b13f4af952f7ea6584dcfb");
  CHECK(sha256_hex(std::string(120, 'a')) ==
        "2f3d335432c70b580af0e8e1b3674a7c020d683aa5f73aaaedfdc55af904c21c");
}

TEST_CASE("hash: file digest equals buffer digest") {
  const fs::path dir = "test_data_tmp_hash";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string payload = "volume bytes\x00\x01\x02";
  {
    std::ofstream out(dir / "f.bin", std::ios::binary);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  CHECK(sha256_file(dir / "f.bin") == sha256_hex(payload));
  CHECK_THROWS_AS(sha256_file(dir / "missing.bin"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("data: generation is deterministic and bit-identical") {
  const GenConfig cfg = small_cfg(11, 6);
  const SemiDataset a = generate_synthetic(cfg);
  const SemiDataset b = generate_synthetic(cfg);
  REQUIRE(a.labeled.size() == 6);
  CHECK(a.unlabeled.empty());
  for (std::size_t i = 0; i < a.labeled.size(); ++i) {
    CHECK(a.labeled[i].id == i);
    CHECK(a.labeled[i].image.data() == b.labeled[i].image.data());
    CHECK(a.labeled[i].mask.data() == b.labeled[i].mask.data());
  }
}

TEST_CASE("data: every generated mask honors the foreground window") {
  GenConfig cfg = small_cfg(3, 40);
  SUBCASE("2d") {}
  SUBCASE("3d") {
    cfg.dims = 3;
    cfg.extent = {32, 32, 16};
    cfg.count = 8;
  }
  const SemiDataset pool = generate_synthetic(cfg);
  for (const LabeledSample& s : pool.labeled) {
    REQUIRE(s.mask.is_binary());
    const double frac =
        static_cast<double>(s.mask.foreground_count()) / static_cast<double>(s.mask.size());
    CHECK(frac >= cfg.min_foreground);
    CHECK(frac <= cfg.max_foreground);
  }
}

TEST_CASE("data: image intensities survive float32 quantization") {
  const SemiDataset pool = generate_synthetic(small_cfg(5, 4));
  for (const LabeledSample& s : pool.labeled)
    for (double v : s.image.data())
      CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("data: split produces the requested partition") {
  GenConfig cfg;
  cfg.seed = 21;
  cfg.count = 80;
  cfg.extent = {16, 16, 1};
  const SemiDataset pool = generate_synthetic(cfg);

  const SemiDataset s16 = split(pool, 16, 99);
  CHECK(s16.labeled.size() == 16);
  CHECK(s16.unlabeled.size() == 64);
  const SemiDataset s8 = split(pool, 8, 99);
  CHECK(s8.labeled.size() == 8);
  CHECK(s8.unlabeled.size() == 72);

  // Labeled and unlabeled ids are disjoint and together cover the pool.
  std::vector<std::uint64_t> ids;
  for (const LabeledSample& s : s16.labeled) ids.push_back(s.id);
  for (const UnlabeledSample& s : s16.unlabeled) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == i);

  // Same seed, same selection; different seed, (almost surely) different one.
  const SemiDataset again = split(pool, 16, 99);
  for (std::size_t i = 0; i < 16; ++i) CHECK(again.labeled[i].id == s16.labeled[i].id);

  CHECK_THROWS_AS(split(pool, 0, 1), SplitError);
  CHECK_THROWS_AS(split(pool, 81, 1), SplitError);
  CHECK_THROWS_AS(split(s16, 4, 1), SplitError);  // already split
  CHECK_THROWS_AS(split(SemiDataset{}, 1, 1), SplitError);
}

TEST_CASE("data: crop is exact and the full-volume crop is the identity") {
  Volume v(2, {4, 3, 1}, VolumeKind::Image);
  for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = static_cast<double>(i);

  const Tensor full = crop_patch(v, {0, 0, 0}, {4, 3, 1});
  CHECK(full.v == v.data());

  const Tensor t = crop_patch(v, {1, 1, 0}, {2, 2, 1});
  CHECK(t.v == std::vector<double>{5, 6, 9, 10});

  CHECK_THROWS_AS(crop_patch(v, {3, 0, 0}, {2, 2, 1}), ShapeError);
  CHECK_THROWS_AS(crop_patch(v, {-1, 0, 0}, {2, 2, 1}), ShapeError);
  CHECK_THROWS_AS(crop_patch(v, {0, 0, 0}, {4, 3, 2}), ShapeError);
}

TEST_CASE("data: flips are involutions and rotations compose as expected") {
  Rng rng(17);
  Tensor t(2, {4, 4, 3});
  for (double& x : t.v) x = rng.uniform();

  for (int axis = 0; axis < 3; ++axis) CHECK(flipped(flipped(t, axis), axis).v == t.v);
  CHECK(rotated90(t, 4).v == t.v);
  CHECK(rotated90(rotated90(t, 1), 3).v == t.v);
  CHECK(rotated90(t, 2).v == flipped(flipped(t, 0), 1).v);
  CHECK(rotated90(t, -1).v == rotated90(t, 3).v);
  CHECK_THROWS_AS(flipped(t, 3), DomainError);

  // Hand-checked quarter turn: a 2x1 row [A B] becomes the column [A; B].
  Tensor row(1, {2, 1, 1});
  row.v = {1.0, 2.0};
  const Tensor col = rotated90(row, 1);
  CHECK(col.sp == std::array<int, 3>{1, 2, 1});
  CHECK(col.v == std::vector<double>{1.0, 2.0});
  const Tensor back = rotated90(col, 1);
  CHECK(back.sp == std::array<int, 3>{2, 1, 1});
  CHECK(back.v == std::vector<double>{2.0, 1.0});
}

TEST_CASE("data: volume/tensor bridge round-trips") {
  const SemiDataset pool = generate_synthetic(small_cfg(9, 1));
  const Volume& img = pool.labeled[0].image;
  const Tensor t = volume_to_tensor(img);
  const Volume v2 = tensor_to_volume(t, img.kind(), img.dims(), img.spacing());
  CHECK(v2.data() == img.data());
  CHECK(v2.extent() == img.extent());
  Tensor two(2, {4, 4, 1});
  CHECK_THROWS_AS(tensor_to_volume(two, VolumeKind::Image, 2), ShapeError);
}

TEST_CASE("data: sample_batch composition, alignment, and determinism") {
  const SemiDataset ds = split(generate_synthetic(small_cfg(31, 12)), 4, 7);
  const std::array<int, 3> patch = {16, 16, 1};

  Rng rng(123);
  const PatchBatch b = sample_batch(ds, patch, rng);
  CHECK(b.labeled_images.size() == 2);
  CHECK(b.labeled_masks.size() == 2);
  CHECK(b.labeled_sdfs.size() == 2);
  CHECK(b.unlabeled_images.size() == 2);
  for (const Tensor& t : b.labeled_images) CHECK(t.sp == patch);
  for (const Tensor& t : b.unlabeled_images) CHECK(t.sp == patch);

  for (std::size_t s = 0; s < 2; ++s) {
    const Tensor& msk = b.labeled_masks[s];
    const Tensor& sdf = b.labeled_sdfs[s];
    for (std::size_t i = 0; i < msk.v.size(); ++i) {
      const bool fg = msk.v[i] != 0.0;
      CHECK((msk.v[i] == 0.0 || msk.v[i] == 1.0));
      CHECK(sdf.v[i] >= -1.0);
      CHECK(sdf.v[i] <= 1.0);
      // Negative-inside convention: foreground exactly where the SDF <= 0.
      CHECK(fg == (sdf.v[i] <= 0.0));
    }
  }

  Rng rng2(123);
  const PatchBatch b2 = sample_batch(ds, patch, rng2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(b2.labeled_images[s].v == b.labeled_images[s].v);
    CHECK(b2.labeled_masks[s].v == b.labeled_masks[s].v);
    CHECK(b2.labeled_sdfs[s].v == b.labeled_sdfs[s].v);
    CHECK(b2.unlabeled_images[s].v == b.unlabeled_images[s].v);
  }

  SamplerOptions full_sdf;
  full_sdf.sdf_from_full_volume = true;
  Rng rng3(5);
  const PatchBatch b3 = sample_batch(ds, patch, rng3, full_sdf);
  CHECK(b3.labeled_sdfs.size() == 2);

  Rng rng4(5);
  CHECK_THROWS_AS(sample_batch(ds, {32, 32, 1}, rng4), ShapeError);
  const SemiDataset pool = generate_synthetic(small_cfg(1, 2));
  Rng rng5(5);
  CHECK_THROWS_AS(sample_batch(pool, patch, rng5), ConfigError);  // no unlabeled samples
}

TEST_CASE("data: vseg1 round-trip is bit-exact") {
  const fs::path dir = "test_data_tmp_vseg";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const SemiDataset pool = generate_synthetic(small_cfg(77, 1));
  const LabeledSample& s = pool.labeled[0];

  save_volume(dir / "img.vseg", s.image);
  const Volume img = load_volume(dir / "img.vseg");
  CHECK(img.data() == s.image.data());
  CHECK(img.extent() == s.image.extent());
  CHECK(img.spacing() == s.image.spacing());
  CHECK(img.kind() == s.image.kind());
  CHECK(img.dims() == s.image.dims());

  save_volume(dir / "msk.vseg", s.mask);
  const Volume msk = load_volume(dir / "msk.vseg");
  CHECK(msk.data() == s.mask.data());
  CHECK(msk.kind() == VolumeKind::BinaryMask);

  // SDF volumes are float32 payloads too; quantize before saving so the
  // round trip can be exact.
  Volume sdf = sdf_target(s.mask);
  for (double& v : sdf.data()) v = static_cast<double>(static_cast<float>(v));
  save_volume(dir / "sdf.vseg", sdf);
  CHECK(load_volume(dir / "sdf.vseg").data() == sdf.data());
  fs::remove_all(dir);
}

TEST_CASE("data: vseg1 rejects malformed files") {
  const fs::path dir = "test_data_tmp_badfiles";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const SemiDataset pool = generate_synthetic(small_cfg(78, 1));
  const Volume& img = pool.labeled[0].image;
  const std::string bytes = encode_volume(img);

  CHECK_THROWS_AS(load_volume(dir / "missing.vseg"), IoError);

  const auto write_bytes = [&dir](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  };

  write_bytes("truncated.vseg", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(load_volume(dir / "truncated.vseg"), FormatError);

  write_bytes("trailing.vseg", bytes + "x");
  CHECK_THROWS_AS(load_volume(dir / "trailing.vseg"), FormatError);

  std::string magic = bytes;
  magic[0] = 'W';
  write_bytes("magic.vseg", magic);
  CHECK_THROWS_AS(load_volume(dir / "magic.vseg"), FormatError);

  write_bytes("short.vseg", "VS");
  CHECK_THROWS_AS(load_volume(dir / "short.vseg"), FormatError);

  Volume bad_mask(2, {2, 2, 1}, VolumeKind::BinaryMask);
  bad_mask.data() = {0.0, 0.5, 1.0, 0.0};
  CHECK_THROWS_AS(encode_volume(bad_mask), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("data: manifest write, verify, tamper, and reload") {
  const fs::path dir = "test_data_tmp_manifest";
  fs::remove_all(dir);
  const GenConfig cfg = small_cfg(41, 10);
  const std::vector<SplitRequest> splits = {{"4", 4, 2024}};

  const DatasetManifest m = write_dataset(dir, cfg, 2, splits);
  REQUIRE(m.samples.size() == 10);
  CHECK(m.samples[7].role == "train");
  CHECK(m.samples[8].role == "test");
  CHECK(m.splits.size() == 1);
  CHECK(m.splits[0].labeled_ids.size() == 4);
  CHECK(m.splits[0].unlabeled_ids.size() == 4);
  REQUIRE(fs::exists(dir / "manifest.json"));
  REQUIRE(fs::exists(dir / m.samples[0].image_path));

  // Idempotent re-run: verifies every hash, writes nothing, same manifest.
  const DatasetManifest m2 = write_dataset(dir, cfg, 2, splits);
  CHECK(m2.samples.size() == m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i)
    CHECK(m2.samples[i].image_sha256 == m.samples[i].image_sha256);

  // The split view: volumes parsed back bit-identically to regeneration.
  const SemiDataset ds = load_split(dir / "manifest.json", "4");
  CHECK(ds.labeled.size() == 4);
  CHECK(ds.unlabeled.size() == 4);
  CHECK(ds.split_spec.seed == 2024);
  for (const LabeledSample& s : ds.labeled) {
    const LabeledSample ref = generate_sample(cfg, s.id);
    CHECK(s.image.data() == ref.image.data());
    CHECK(s.mask.data() == ref.mask.data());
  }
  CHECK_THROWS_AS(load_split(dir / "manifest.json", "nope"), ConfigError);

  const std::vector<LabeledSample> tests = load_test_cases(dir / "manifest.json");
  CHECK(tests.size() == 2);
  CHECK(tests[0].id == 8);
  CHECK(tests[0].mask.is_binary());

  // Tampering with a volume payload trips the hash check on re-run and load.
  flip_last_byte(dir / m.samples[3].mask_path);
  CHECK_THROWS_AS(write_dataset(dir, cfg, 2, splits), HashMismatch);
  CHECK_THROWS_AS(load_split(dir / "manifest.json", "4"), HashMismatch);
  fs::remove_all(dir);
}

TEST_CASE("data: manifest text disagreement is rejected") {
  const fs::path dir = "test_data_tmp_manifest2";
  fs::remove_all(dir);
  const GenConfig cfg = small_cfg(42, 6);
  write_dataset(dir, cfg, 1, {});
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::app);
    out << " ";
  }
  CHECK_THROWS_AS(write_dataset(dir, cfg, 1, {}), HashMismatch);

  GenConfig other = cfg;
  other.seed = 43;
  CHECK_THROWS_AS(write_dataset(dir, other, 1, {}), HashMismatch);

  std::ofstream(dir / "manifest.json", std::ios::binary) << "{not json";
  CHECK_THROWS_AS(load_manifest(dir / "manifest.json"), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "no_such_manifest.json"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("data: config validation") {
  GenConfig cfg = small_cfg(1, 1);
  cfg.count = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg(1, 1);
  cfg.dims = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg(1, 1);
  cfg.extent = {8, 8, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg(1, 1);
  cfg.min_foreground = 0.7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(write_dataset("test_data_tmp_cfg", small_cfg(1, 4), 4, {}), ConfigError);

  // An unsatisfiable foreground window exhausts the retry budget.
  GenConfig impossible = small_cfg(1, 1);
  impossible.min_foreground = 0.98;
  impossible.max_foreground = 0.99;
  impossible.max_retries = 5;
  CHECK_THROWS_AS(generate_sample(impossible, 0), GenerationRetryExceeded);
}
