#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fawn/io.hpp"
#include "fawn/scene.hpp"
#include "test_support.hpp"

namespace fawn {
namespace {

using Bytes = std::vector<std::uint8_t>;

std::uint32_t le32(const Bytes& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

float lef32(const Bytes& b, std::size_t at) { return std::bit_cast<float>(le32(b, at)); }

std::string error_of(const auto& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

// ---------------------------------------------------------------- dataset

TEST(DatasetFormat, SizesFollowFixedRecordLength) {
  EXPECT_EQ(encode_dataset({}).size(), 13u);
  const auto one = generate_dataset(1, 1);
  EXPECT_EQ(encode_dataset(one).size(), 11955u);
  const auto three = generate_dataset(3, 1);
  EXPECT_EQ(encode_dataset(three).size(), 13u + 3u * 11942u);
}

TEST(DatasetFormat, HeaderAndRecordLayout) {
  CsiSample s;
  s.label = {Cell{2, 7}, std::nullopt};
  s.csi_5g = Tensor(kShape5g, 0.0);
  s.csi_wifi = Tensor(kShapeWifi, 0.0);
  s.csi_5g[0] = 1.5;
  s.csi_5g[1] = -0.25;
  s.csi_wifi[103] = 3.0;
  const Bytes b = encode_dataset(std::vector{s});
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "FAWNDATA");
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(le32(b, 9), 1u);
  EXPECT_EQ((Bytes{b.begin() + 13, b.begin() + 19}), (Bytes{1, 0, 2, 7, 255, 255}));
  EXPECT_EQ(lef32(b, 19), 1.5f);
  EXPECT_EQ(lef32(b, 23), -0.25f);
  EXPECT_EQ(lef32(b, b.size() - 4), 3.0f);
}

TEST(DatasetFormat, RoundTripPreservesFloat32Values) {
  const auto data = generate_dataset(4, 9);
  const auto back = decode_dataset(encode_dataset(data));
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].label, data[i].label);
    for (std::size_t j = 0; j < data[i].csi_5g.size(); ++j) {
      ASSERT_EQ(back[i].csi_5g[j], double(float(data[i].csi_5g[j])));
    }
  }
  EXPECT_EQ(encode_dataset(back), encode_dataset(data));
}

TEST(DatasetFormat, FileRewriteIsByteIdentical) {
  const auto dir = testing::scratch_dir("io_dataset");
  const auto data = generate_dataset(5, 2);
  write_dataset(data, dir / "a.bin");
  write_dataset(read_dataset(dir / "a.bin"), dir / "b.bin");
  EXPECT_EQ(io_detail::read_file(dir / "a.bin"), io_detail::read_file(dir / "b.bin"));
}

TEST(DatasetFormat, ErrorsCarryByteOffsets) {
  const Bytes good = encode_dataset(generate_dataset(2, 2));

  Bytes magic = good;
  magic[0] = 'X';
  EXPECT_NE(error_of([&] { decode_dataset(magic); }).find("offset 0"), std::string::npos);

  Bytes version = good;
  version[8] = 2;
  EXPECT_NE(error_of([&] { decode_dataset(version); }).find("offset 8"), std::string::npos);

  const Bytes truncated(good.begin(), good.end() - 1);
  const std::string t = error_of([&] { decode_dataset(truncated); });
  EXPECT_NE(t.find("truncated"), std::string::npos) << t;

  Bytes trailing = good;
  trailing.push_back(0);
  EXPECT_NE(error_of([&] { decode_dataset(trailing); }).find("offset 23897"), std::string::npos);

  Bytes flag = good;
  flag[13 + 11942] = 7;
  EXPECT_NE(error_of([&] { decode_dataset(flag); }).find("offset 11955"), std::string::npos);

  Bytes cell = good;
  cell[13] = 1;
  cell[15] = 9;
  cell[16] = 0;
  EXPECT_NE(error_of([&] { decode_dataset(cell); }).find("offset"), std::string::npos);

  Bytes sentinel = good;
  sentinel[13] = 0;
  sentinel[15] = 3;
  EXPECT_NE(error_of([&] { decode_dataset(sentinel); }).find("offset"), std::string::npos);

  EXPECT_THROW(decode_dataset(Bytes{'F', 'A'}), FormatError);
}

TEST(DatasetFormat, MissingFileIsReported) {
  EXPECT_ANY_THROW(read_dataset("/nonexistent/dir/data.bin"));
}

// ---------------------------------------------------------------- model

FawnParams random_params(std::uint64_t seed) {
  Rng rng(seed);
  return init_params(rng);
}

TEST(ModelFormat, HeaderLayout) {
  const Bytes b = encode_model(random_params(1));
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "FAWNMODL");
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[9] | b[10] << 8, 25);
  std::size_t expected = 11;
  for (const auto& spec : FawnParams::specs()) {
    expected += 2 + spec.name.size() + 1 + 4 * spec.shape.size() + 4 * shape_numel(spec.shape);
  }
  EXPECT_EQ(b.size(), expected);
}

TEST(ModelFormat, RoundTripIsByteIdentical) {
  const FawnParams p = random_params(2);
  const Bytes b = encode_model(p);
  EXPECT_EQ(encode_model(decode_model(b)), b);
}

TEST(ModelFormat, ReloadedModelGivesNearlySameLogits) {
  const auto dir = testing::scratch_dir("io_model");
  const FawnParams p = random_params(3);
  save_model(p, dir / "m.bin");
  const FawnParams q = load_model(dir / "m.bin");
  const auto data = generate_dataset(3, 3);
  for (const CsiSample& s : data) {
    const SceneEstimate a = fawn_forward(s, p), b = fawn_forward(s, q);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(a.presence[i], b.presence[i], 1e-4);
    for (std::size_t i = 0; i < a.px.size(); ++i) EXPECT_NEAR(a.px[i], b.px[i], 1e-4);
    for (std::size_t i = 0; i < a.ry.size(); ++i) EXPECT_NEAR(a.ry[i], b.ry[i], 1e-4);
  }
}

TEST(ModelFormat, TamperedDimensionNamesParameter) {
  Bytes b = encode_model(random_params(4));
  // First record: u16 name length, name, u8 rank, then u32 dims.
  const std::size_t name_len = b[11] | b[12] << 8;
  const std::string name(b.begin() + 13, b.begin() + 13 + name_len);
  b[13 + name_len + 1] += 1;
  const std::string msg = error_of([&] { decode_model(b); });
  EXPECT_NE(msg.find("'" + name + "'"), std::string::npos) << msg;
}

TEST(ModelFormat, RejectsUnknownMissingAndTrailing) {
  const Bytes good = encode_model(random_params(5));

  Bytes unknown = good;
  unknown[13] = 'Z';
  EXPECT_NE(error_of([&] { decode_model(unknown); }).find("unknown parameter"), std::string::npos);

  Bytes fewer = good;
  fewer[9] = 24;
  // The final record becomes trailing garbage once the count drops.
  EXPECT_NE(error_of([&] { decode_model(fewer); }).find("missing parameter"), std::string::npos);

  Bytes trailing = good;
  trailing.push_back(1);
  EXPECT_NE(error_of([&] { decode_model(trailing); }).find("trailing"), std::string::npos);

  EXPECT_THROW(decode_model(Bytes(good.begin(), good.end() - 3)), FormatError);
  Bytes magic = good;
  magic[3] = 'x';
  EXPECT_THROW(decode_model(magic), FormatError);
}

// ---------------------------------------------------------------- config

TEST(Config, EmptyObjectGivesDefaults) {
  const TrainConfig c = parse_config(std::string_view("{}"));
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.adam.lr, 1e-3);
  EXPECT_EQ(c.seed, 42u);
}

TEST(Config, ParsesAllKeys) {
  const TrainConfig c = parse_config(std::string_view(
      R"({"epochs": 3, "batch_size": 2, "lr": 0.01, "beta1": 0.8, "beta2": 0.99, "eps": 1e-6,
          "seed": 7, "split": [0.6, 0.2, 0.2]})"));
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.batch_size, 2u);
  EXPECT_EQ(c.adam.lr, 0.01);
  EXPECT_EQ(c.adam.beta1, 0.8);
  EXPECT_EQ(c.adam.beta2, 0.99);
  EXPECT_EQ(c.adam.eps, 1e-6);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.split[0], 0.6);
  const TrainConfig again = parse_config(std::string_view(config_to_json(c).dump()));
  EXPECT_EQ(again.epochs, c.epochs);
  EXPECT_EQ(again.split, c.split);
}

std::string config_error_key(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_EQ(config_error_key(R"({"epochs": 0})"), "epochs");
  EXPECT_EQ(config_error_key(R"({"epochs": -3})"), "epochs");
  EXPECT_EQ(config_error_key(R"({"epochs": 1.5})"), "epochs");
  EXPECT_EQ(config_error_key(R"({"lr": "fast"})"), "lr");
  EXPECT_EQ(config_error_key(R"({"batchsize": 4})"), "batchsize");
  EXPECT_EQ(config_error_key(R"({"split": [0.5, 0.5]})"), "split");
  EXPECT_EQ(config_error_key(R"({"split": [0.5, 0.5, 0.5]})"), "split");
  EXPECT_EQ(config_error_key("[1, 2]"), "$");
  EXPECT_EQ(config_error_key("{not json"), "$");
}

// ---------------------------------------------------------------- report

TEST(Report, JsonRoundTripIsExact) {
  EvalReport r;
  r.accuracy = 0.1 + 0.2;
  r.f1_macro = 1.0 / 3.0;
  r.per_entity_f1 = {0.5, 2.0 / 7.0};
  r.f1_zero_denominator = true;
  r.errors = {0.0, 0.6, 0.6 * std::sqrt(2.0)};
  r.ecdf = ecdf(r.errors);
  r.heatmap[3][4] = 0.6;
  r.heatmap[9][0] = 0.0;
  r.train_loss = {3.1, 2.7};
  r.val_loss = {3.3, 2.9};
  r.timing = Timing{1234.5, 10.25};
  const auto dir = testing::scratch_dir("io_report");
  write_report(r, dir / "r.json");
  const EvalReport back = read_report(dir / "r.json");
  EXPECT_EQ(back.accuracy, r.accuracy);
  EXPECT_EQ(back.f1_macro, r.f1_macro);
  EXPECT_EQ(back.per_entity_f1, r.per_entity_f1);
  EXPECT_EQ(back.errors, r.errors);
  EXPECT_EQ(back.ecdf, r.ecdf);
  EXPECT_EQ(back.heatmap, r.heatmap);
  EXPECT_EQ(back.train_loss, r.train_loss);
  EXPECT_EQ(back.val_loss, r.val_loss);
  EXPECT_EQ(back.timing, r.timing);
  EXPECT_EQ(report_text(back), report_text(r));
}

TEST(Report, NullTimingAndEmptyEcdf) {
  EvalReport r;
  r.ecdf_empty = true;
  const auto j = report_to_json(r);
  EXPECT_TRUE(j["timing"].is_null());
  EXPECT_TRUE(j["ecdf"].empty());
  EXPECT_EQ(j["heatmap"].size(), 10u);
  EXPECT_EQ(j["heatmap"][0].size(), 9u);
  EXPECT_TRUE(j["heatmap"][0][0].is_null());
  const EvalReport back = report_from_json(j);
  EXPECT_FALSE(back.timing);
  EXPECT_TRUE(back.ecdf_empty);
}

TEST(Report, MalformedDocumentIsConfigError) {
  EXPECT_THROW(report_from_json(nlohmann::json::parse(R"({"accuracy": 1})")), ConfigError);
}

}  // namespace
}  // namespace fawn
