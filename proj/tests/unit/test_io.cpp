#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "oracles.hpp"
#include "splicemix/errors.hpp"
#include "splicemix/io.hpp"

using namespace splicemix;
using namespace splicemix::io;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("splicemix_io_") + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Header dictionaries exactly as numpy 1.x/2.x write them.
std::vector<std::uint8_t> numpy_preamble(const std::string& dict) {
  std::string header = dict;
  header.append(117 - dict.size(), ' ');
  header.push_back('\n');
  std::vector<std::uint8_t> out{0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0, 118, 0};
  out.insert(out.end(), header.begin(), header.end());
  return out;
}

const std::vector<std::uint8_t> kWhiteRgba{
    0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x06, 0x00, 0x00, 0x00, 0x72, 0xB6, 0x0D,
    0x24, 0x00, 0x00, 0x00, 0x11, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9C, 0x63, 0xF8, 0xFF, 0xFF, 0x7F,
    0x03, 0x08, 0x33, 0xC0, 0x18, 0x00, 0x80, 0xA0, 0x0D, 0xF5, 0xB5, 0xAE, 0xA8, 0x1C, 0x00, 0x00,
    0x00, 0x00, 0x49, 0x45, 0x4E, 0x44, 0xAE, 0x42, 0x60, 0x82};
const std::vector<std::uint8_t> kGrayPair{
    0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0xD1, 0x49, 0x20,
    0x56, 0x00, 0x00, 0x00, 0x0B, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9C, 0x63, 0x60, 0x30, 0x06, 0x00,
    0x00, 0x36, 0x00, 0x34, 0x39, 0x32, 0xD3, 0x91, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4E, 0x44,
    0xAE, 0x42, 0x60, 0x82};
const std::vector<std::uint8_t> kGray16{
    0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x10, 0x00, 0x00, 0x00, 0x00, 0x6A, 0xEE, 0x47,
    0x16, 0x00, 0x00, 0x00, 0x0B, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9C, 0x63, 0x60, 0x60, 0x00, 0x00,
    0x00, 0x03, 0x00, 0x01, 0xB8, 0xAD, 0x3A, 0x63, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4E, 0x44,
    0xAE, 0x42, 0x60, 0x82};

SplicedBatch small_batch(std::uint64_t seed) {
  SeededStream rng(seed);
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < 8; ++i) {
    ImageTensor img(3, 6, 6);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform01());
    MultiHotLabel y(4);
    for (std::size_t k = 0; k < 4; ++k) y.set(k, rng.bernoulli(0.4));
    batch.push_back({img, y});
  }
  AugConfig cfg;
  cfg.grid_family = {{2, 3}, {1, 2}};
  cfg.mixed_frac = 0.5;
  return splicemix::splicemix(batch, cfg, rng);
}

}  // namespace

TEST(Npy, HeadersMatchNumpy) {
  const std::vector<float> six(6, 0.0f);
  auto want = numpy_preamble("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }");
  want.resize(want.size() + 24, 0);
  EXPECT_EQ(encode_npy(NpyArray::from_floats({2, 3}, six)), want);

  EXPECT_EQ(encode_npy(NpyArray::from_uint8({0, 4}, {})),
            numpy_preamble("{'descr': '|u1', 'fortran_order': False, 'shape': (0, 4), }"));

  auto vec = numpy_preamble("{'descr': '<f4', 'fortran_order': False, 'shape': (5,), }");
  vec.resize(vec.size() + 20, 0);
  EXPECT_EQ(encode_npy(NpyArray::from_floats({5}, std::vector<float>(5, 0.0f))), vec);
}

TEST(Npy, RoundTripBitExact) {
  TempDir tmp;
  SeededStream rng(1);
  std::vector<float> values(2 * 3 * 4 * 4);
  for (auto& v : values) v = static_cast<float>(rng.normal());
  values[0] = -0.0f;
  values[1] = std::numeric_limits<float>::denorm_min();
  const auto a = NpyArray::from_floats({2, 3, 4, 4}, values);
  write_npy(a, tmp.path() / "a.npy");
  const auto b = read_npy(tmp.path() / "a.npy");
  EXPECT_EQ(a, b);
  const auto back = b.to_floats();
  EXPECT_EQ(std::memcmp(back.data(), values.data(), values.size() * sizeof(float)), 0);
}

TEST(Npy, EmptyArray) {
  const auto a = NpyArray::from_floats({0, 7}, {});
  const auto bytes = encode_npy(a);
  EXPECT_EQ(bytes.size() % 64, 0u);
  const auto b = decode_npy(bytes);
  EXPECT_EQ(b.shape, (std::vector<std::size_t>{0, 7}));
  EXPECT_TRUE(b.payload.empty());
}

TEST(Npy, RejectsUnsupported) {
  auto fortran = numpy_preamble("{'descr': '<f4', 'fortran_order': True, 'shape': (2, 2), }");
  fortran.resize(fortran.size() + 16, 0);
  EXPECT_THROW(decode_npy(fortran), FormatError);

  auto f8 = numpy_preamble("{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }");
  f8.resize(f8.size() + 8, 0);
  EXPECT_THROW(decode_npy(f8), FormatError);

  auto truncated = numpy_preamble("{'descr': '<f4', 'fortran_order': False, 'shape': (4,), }");
  truncated.resize(truncated.size() + 8, 0);
  EXPECT_THROW(decode_npy(truncated), FormatError);

  std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e'};
  EXPECT_THROW(decode_npy(junk), FormatError);
  EXPECT_THROW(NpyArray::from_floats({3}, std::vector<float>(2)), DimensionError);
}

TEST(Npy, RandomRoundTrips) {
  SeededStream rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (std::size_t d = 0, n = 1 + rng.uniform(4); d < n; ++d) {
      shape.push_back(rng.uniform(5));
      count *= shape.back();
    }
    if (rng.bernoulli(0.5)) {
      std::vector<float> v(count);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      const auto a = NpyArray::from_floats(shape, v);
      ASSERT_EQ(decode_npy(encode_npy(a)), a);
    } else {
      std::vector<std::uint8_t> v(count);
      for (auto& x : v) x = static_cast<std::uint8_t>(rng.uniform(256));
      const auto a = NpyArray::from_uint8(shape, v);
      ASSERT_EQ(decode_npy(encode_npy(a)), a);
    }
  }
}

TEST(Npy, StackImagesAndLabels) {
  std::vector<ImageTensor> images{ImageTensor(2, 3, 4, 1.0f), ImageTensor(2, 3, 4, 2.0f)};
  const auto a = stack_images(images);
  EXPECT_EQ(a.shape, (std::vector<std::size_t>{2, 2, 3, 4}));
  const auto back = unstack_images(a);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[1].bit_equal(images[1]));
  std::vector<ImageTensor> ragged{ImageTensor(1, 2, 2), ImageTensor(1, 2, 3)};
  EXPECT_THROW(stack_images(ragged), DimensionError);

  std::vector<MultiHotLabel> labels{MultiHotLabel::from_bytes(std::vector<std::uint8_t>{1, 0, 1})};
  const auto l = stack_labels(labels);
  EXPECT_EQ(l.shape, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(unstack_labels(l), labels);
}

TEST(Png, DecodesWhiteRgbaAsOnes) {
  TempDir tmp;
  write_bytes(tmp.path() / "w.png", kWhiteRgba);
  const auto img = decode_image(tmp.path() / "w.png");
  EXPECT_EQ(img.channels(), 3u);
  EXPECT_EQ(img.height(), 2u);
  EXPECT_EQ(img.width(), 2u);
  for (float v : img.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Png, DecodesGrayscale) {
  TempDir tmp;
  write_bytes(tmp.path() / "g.png", kGrayPair);
  const auto img = decode_image(tmp.path() / "g.png");
  EXPECT_EQ(img.channels(), 1u);
  EXPECT_EQ(img.at(0, 0, 0), 0.0f);
  EXPECT_EQ(img.at(0, 0, 1), 51.0f / 255.0f);
}

TEST(Png, RejectsSixteenBitAndGarbage) {
  TempDir tmp;
  write_bytes(tmp.path() / "d.png", kGray16);
  EXPECT_THROW(decode_image(tmp.path() / "d.png"), FormatError);
  write_bytes(tmp.path() / "x.png", {1, 2, 3});
  EXPECT_THROW(decode_image(tmp.path() / "x.png"), FormatError);
  EXPECT_THROW(encode_png(ImageTensor(2, 2, 2), tmp.path() / "two.png"), DimensionError);
}

TEST(Png, QuantizationRoundTrip) {
  TempDir tmp;
  SeededStream rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t c = rng.bernoulli(0.5) ? 1 : 3;
    ImageTensor img(c, 1 + rng.uniform(9), 1 + rng.uniform(9));
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform01());
    const auto p = tmp.path() / "q.png";
    encode_png(img, p);
    const auto back = decode_image(p);
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) {
      ASSERT_LE(std::abs(back.data()[i] - img.data()[i]), 1.0f / 255.0f);
    }
  }
}

TEST(Png, ClampsOutOfRange) {
  TempDir tmp;
  ImageTensor img(1, 1, 2, std::vector<float>{-0.5f, 1.5f});
  encode_png(img, tmp.path() / "c.png");
  const auto back = decode_image(tmp.path() / "c.png");
  EXPECT_EQ(back.at(0, 0, 0), 0.0f);
  EXPECT_EQ(back.at(0, 0, 1), 1.0f);
}

TEST(Png, PreviewWritesOneFilePerMixedImage) {
  TempDir tmp;
  const auto batch = small_batch(4);
  const auto files = encode_preview(batch, tmp.path());
  ASSERT_EQ(files.size(), batch.mixed.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto img = decode_image(files[i]);
    ASSERT_TRUE(img.same_shape(batch.mixed[i].image));
  }
}

TEST(Manifest, RoundTripAndErrors) {
  TempDir tmp;
  Manifest m{{"cat", "dog", "car"}, {{"a.png", {0, 2}}, {"b.png", {}}}};
  save_manifest(m, tmp.path() / "m.json");
  const auto back = load_manifest(tmp.path() / "m.json");
  EXPECT_EQ(back.classes, m.classes);
  EXPECT_EQ(back.label(0).to_string(), "101");
  EXPECT_EQ(back.label(1).to_string(), "000");

  const auto bad = nlohmann::json::parse(
      R"({"classes": ["a", "b"], "entries": [{"image": "x.png", "labels": [0]}, {"image": "y.png", "labels": [2]}]})");
  try {
    manifest_from_json(bad);
    FAIL() << "expected a schema error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("y.png"), std::string::npos) << e.what();
  }
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"classes": []})")), FormatError);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(
                   R"({"classes": ["a"], "entries": [{"image": "x.png", "labels": [-1]}]})")),
               FormatError);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(
                   R"({"classes": ["a"], "entries": [{"image": "x.png", "labels": []}, {"image": "x.png", "labels": []}]})")),
               FormatError);
}

TEST(AugConfigJson, RoundTripAndErrors) {
  AugConfig cfg;
  cfg.grid_family = {{2, 3}, {1, 2}};
  cfg.dropout_prob = 0.125;
  cfg.mixed_frac = 0.5;
  cfg.seed = 1234567890123ULL;
  cfg.dropout_scope = DropoutScope::per_image;
  cfg.cardinality = CardinalityPolicy::strict;
  const auto back = aug_config_from_json(aug_config_to_json(cfg));
  EXPECT_EQ(back.grid_family, cfg.grid_family);
  EXPECT_EQ(back.dropout_prob, cfg.dropout_prob);
  EXPECT_EQ(back.mixed_frac, cfg.mixed_frac);
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.dropout_scope, cfg.dropout_scope);
  EXPECT_EQ(back.cardinality, cfg.cardinality);

  using nlohmann::json;
  EXPECT_THROW(aug_config_from_json(json::parse(R"({"grid": ["2x2"]})")), FormatError);
  EXPECT_THROW(aug_config_from_json(json::parse(R"({"grid_family": ["2by2"]})")), FormatError);
  EXPECT_THROW(aug_config_from_json(json::parse(R"({"dropout_prob": 2})")), FormatError);
  EXPECT_THROW(aug_config_from_json(json::parse(R"({"dropout_scope": "sometimes"})")), FormatError);
  EXPECT_THROW(aug_config_from_json(json::parse("[1, 2]")), FormatError);
  EXPECT_NO_THROW(aug_config_from_json(json::object()));
}

TEST(PlanJson, RoundTripAndDigest) {
  const auto batch = small_batch(5);
  const auto doc = plan_to_json(batch.plan);
  const auto back = plan_from_json(doc);
  EXPECT_EQ(plan_to_json(back), doc);
  EXPECT_EQ(plan_digest(back), plan_digest(batch.plan));
  EXPECT_EQ(plan_digest(batch.plan).size(), 16u);
  EXPECT_NE(plan_digest(small_batch(6).plan), plan_digest(batch.plan));
}

TEST(WriteJson, ByteStable) {
  TempDir tmp;
  const auto doc = nlohmann::json::parse(R"({"b": [1, 2.5], "a": "x"})");
  write_json(doc, tmp.path() / "1.json");
  write_json(nlohmann::json::parse(doc.dump()), tmp.path() / "2.json");
  const auto files = oracle::read_tree(tmp.path());
  EXPECT_EQ(files.at("1.json"), files.at("2.json"));
  EXPECT_EQ(files.at("1.json").back(), '\n');
}

TEST(BatchArchive, RoundTripAndRevalidation) {
  TempDir tmp;
  const auto batch = small_batch(7);
  write_batch_archive(batch, tmp.path() / "b");
  const auto a = read_batch_archive(tmp.path() / "b");
  EXPECT_EQ(a.n_regular(), 8u);
  EXPECT_EQ(a.images.shape[0], batch.size());
  const auto images = unstack_images(a.images);
  for (std::size_t i = 0; i < batch.regulars.size(); ++i) EXPECT_TRUE(images[i].bit_equal(batch.regulars[i].image));
  for (std::size_t i = 0; i < batch.mixed.size(); ++i) {
    EXPECT_TRUE(images[8 + i].bit_equal(batch.mixed[i].image));
  }
  EXPECT_EQ(plan_digest(a.plan), plan_digest(batch.plan));

  write_npy(NpyArray::from_uint8({1, 4}, std::vector<std::uint8_t>{1, 0, 0, 1}), tmp.path() / "b" / "labels.npy");
  EXPECT_THROW(read_batch_archive(tmp.path() / "b"), FormatError);
  fs::remove(tmp.path() / "b" / "plan.json");
  EXPECT_THROW(read_batch_archive(tmp.path() / "b"), Error);
}

TEST(MetricsJson, CarriesAllFields) {
  metrics::EvalTable t(2, 2, {0.9, 0.1, 0.2, 0.8}, {1, 0, 0, 1});
  const auto doc = metrics_to_json(metrics::evaluate(t));
  EXPECT_DOUBLE_EQ(doc.at("mAP").get<double>(), 100.0);
  EXPECT_TRUE(doc.contains("top3"));
}
