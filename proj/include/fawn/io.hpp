#ifndef FAWN_IO_HPP
#define FAWN_IO_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fawn/errors.hpp"
#include "fawn/model.hpp"
#include "fawn/sample.hpp"
#include "fawn/train.hpp"

// On-disk formats. Integers are little-endian, floats IEEE-754 binary32.
//
// Dataset ("FAWNDATA"):
//   magic[8] | version u8 = 1 | count u32
//   per sample: person_present u8 | robot_present u8 | p_ix u8 | p_iy u8 |
//               r_ix u8 | r_iy u8 (255 for absent) |
//               5G f32[2*360*4] | Wi-Fi f32[2*52*1]   (channel, subcarrier, symbol)
//
// Model ("FAWNMODL"):
//   magic[8] | version u8 = 1 | count u16
//   per parameter: name_len u16 | name | rank u8 | dims u32[rank] | f32 data

namespace fawn {

inline constexpr std::string_view kDatasetMagic = "FAWNDATA";
inline constexpr std::string_view kModelMagic = "FAWNMODL";
inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::uint8_t kAbsentCell = 255;
inline constexpr std::size_t kDatasetHeaderBytes = 13;
inline constexpr std::size_t kSampleBytes = 6 + 4 * 2880 + 4 * 104;

namespace io_detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::optional<Cell> read_entity(ByteReader& r, std::uint8_t present, std::size_t flag_offset, const char* who) {
  const std::size_t at = r.offset();
  const std::uint8_t ix = r.u8("label cell");
  const std::uint8_t iy = r.u8("label cell");
  if (present > 1) throw FormatError(std::string(who) + " presence flag must be 0 or 1", flag_offset);
  if (!present) {
    if (ix != kAbsentCell || iy != kAbsentCell) {
      throw FormatError(std::string("absent ") + who + " must use cell sentinel 255", at);
    }
    return std::nullopt;
  }
  const Cell c{ix, iy};
  if (!c.in_grid()) throw FormatError(std::string(who) + " cell outside the 9x10 grid", at);
  return c;
}

}  // namespace io_detail

// --------------------------------------------------------------------------
// Dataset

inline std::vector<std::uint8_t> encode_dataset(std::span<const CsiSample> samples) {
  io_detail::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u8(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const CsiSample& s : samples) {
    s.label.validate();
    require_shape(s.csi_5g, kShape5g, "5G CSI");
    require_shape(s.csi_wifi, kShapeWifi, "Wi-Fi CSI");
    w.u8(s.label.person ? 1 : 0);
    w.u8(s.label.robot ? 1 : 0);
    w.u8(s.label.person ? s.label.person->ix : kAbsentCell);
    w.u8(s.label.person ? s.label.person->iy : kAbsentCell);
    w.u8(s.label.robot ? s.label.robot->ix : kAbsentCell);
    w.u8(s.label.robot ? s.label.robot->iy : kAbsentCell);
    for (double v : s.csi_5g.data()) w.f32(v);
    for (double v : s.csi_wifi.data()) w.f32(v);
  }
  return w.buffer();
}

inline std::vector<CsiSample> decode_dataset(std::span<const std::uint8_t> bytes) {
  io_detail::ByteReader r(bytes);
  if (r.bytes(kDatasetMagic.size(), "magic") != kDatasetMagic) throw FormatError("bad dataset magic", 0);
  const std::size_t version_at = r.offset();
  if (const std::uint8_t v = r.u8("version"); v != kFormatVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(v), version_at);
  }
  const std::uint32_t count = r.u32("sample count");
  if (r.remaining() != static_cast<std::uint64_t>(count) * kSampleBytes) {
    const std::uint64_t expected = kDatasetHeaderBytes + static_cast<std::uint64_t>(count) * kSampleBytes;
    if (r.remaining() < static_cast<std::uint64_t>(count) * kSampleBytes) {
      throw FormatError("truncated dataset: header announces " + std::to_string(count) + " samples (" +
                            std::to_string(expected) + " bytes) but file has " + std::to_string(bytes.size()),
                        bytes.size());
    }
    throw FormatError("trailing bytes after " + std::to_string(count) + " samples", expected);
  }
  std::vector<CsiSample> out(count);
  for (CsiSample& s : out) {
    const std::size_t flags_at = r.offset();
    const std::uint8_t pp = r.u8("person flag");
    const std::uint8_t rp = r.u8("robot flag");
    s.label.person = io_detail::read_entity(r, pp, flags_at, "person");
    s.label.robot = io_detail::read_entity(r, rp, flags_at + 1, "robot");
    for (double& v : s.csi_5g.data()) v = r.f32("5G CSI");
    for (double& v : s.csi_wifi.data()) v = r.f32("Wi-Fi CSI");
  }
  return out;
}

inline void write_dataset(std::span<const CsiSample> samples, const std::filesystem::path& path) {
  io_detail::write_file(path, encode_dataset(samples));
}

inline std::vector<CsiSample> read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io_detail::read_file(path));
}

// --------------------------------------------------------------------------
// Model checkpoint

inline std::vector<std::uint8_t> encode_model(const FawnParams& params) {
  io_detail::ByteWriter w;
  w.bytes(kModelMagic);
  w.u8(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string_view name = params.name(i);
    const Tensor& t = params[i];
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(v);
  }
  return w.buffer();
}

/// Parameters are matched by name; every documented parameter must appear
/// exactly once with its documented shape.
inline FawnParams decode_model(std::span<const std::uint8_t> bytes) {
  io_detail::ByteReader r(bytes);
  if (r.bytes(kModelMagic.size(), "magic") != kModelMagic) throw FormatError("bad model magic", 0);
  const std::size_t version_at = r.offset();
  if (const std::uint8_t v = r.u8("version"); v != kFormatVersion) {
    throw FormatError("unsupported model version " + std::to_string(v), version_at);
  }
  const std::uint16_t count = r.u16("parameter count");
  FawnParams params;
  std::set<std::size_t> seen;
  for (std::uint16_t p = 0; p < count; ++p) {
    const std::size_t name_at = r.offset();
    const std::uint16_t len = r.u16("parameter name length");
    const std::string name = r.bytes(len, "parameter name");
    std::size_t index = 0;
    try {
      index = FawnParams::index_of(name);
    } catch (const IndexError&) {
      throw FormatError("unknown parameter '" + name + "'", name_at);
    }
    if (!seen.insert(index).second) throw FormatError("duplicate parameter '" + name + "'", name_at);
    const Shape& expected = FawnParams::specs()[index].shape;
    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.u8("parameter rank");
    Shape dims;
    for (std::uint8_t d = 0; d < rank; ++d) dims.push_back(r.u32("parameter dims"));
    if (dims != expected) {
      throw FormatError("parameter '" + name + "' has shape " + shape_str(dims) + ", architecture expects " +
                            shape_str(expected),
                        rank_at);
    }
    for (double& v : params[index].data()) v = r.f32("parameter data");
  }
  if (seen.size() != params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!seen.count(i)) {
        throw FormatError("missing parameter '" + std::string(params.name(i)) + "'", r.offset());
      }
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after model parameters", r.offset());
  return params;
}

inline void save_model(const FawnParams& params, const std::filesystem::path& path) {
  io_detail::write_file(path, encode_model(params));
}

inline FawnParams load_model(const std::filesystem::path& path) { return decode_model(io_detail::read_file(path)); }

// --------------------------------------------------------------------------
// Training configuration (JSON, every key optional)

inline TrainConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("$", "config document must be a JSON object");
  TrainConfig cfg;
  auto number = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "must be a number");
    return v.get<double>();
  };
  auto count = [](const nlohmann::json& v, const std::string& key) -> std::uint64_t {
    if (!v.is_number_integer()) throw ConfigError(key, "must be an integer");
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const auto s = v.get<std::int64_t>();
    if (s < 0) throw ConfigError(key, "must be non-negative");
    return static_cast<std::uint64_t>(s);
  };
  for (const auto& [key, v] : doc.items()) {
    if (key == "epochs") {
      cfg.epochs = count(v, key);
    } else if (key == "batch_size") {
      cfg.batch_size = count(v, key);
    } else if (key == "lr") {
      cfg.adam.lr = number(v, key);
    } else if (key == "beta1") {
      cfg.adam.beta1 = number(v, key);
    } else if (key == "beta2") {
      cfg.adam.beta2 = number(v, key);
    } else if (key == "eps") {
      cfg.adam.eps = number(v, key);
    } else if (key == "seed") {
      cfg.seed = count(v, key);
    } else if (key == "split") {
      if (!v.is_array() || v.size() != 3) throw ConfigError(key, "must be an array of three fractions");
      for (std::size_t i = 0; i < 3; ++i) cfg.split[i] = number(v[i], "split[" + std::to_string(i) + "]");
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig parse_config(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline TrainConfig read_config(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline nlohmann::ordered_json config_to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},     {"batch_size", cfg.batch_size}, {"lr", cfg.adam.lr},
          {"beta1", cfg.adam.beta1},  {"beta2", cfg.adam.beta2},      {"eps", cfg.adam.eps},
          {"seed", cfg.seed},         {"split", cfg.split}};
}

// --------------------------------------------------------------------------
// Evaluation report (JSON)

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  ordered_json ecdf = ordered_json::array();
  for (const EcdfPoint& p : r.ecdf) ecdf.push_back({p.error, p.fraction});
  ordered_json heat = ordered_json::array();
  for (const auto& row : r.heatmap) {
    ordered_json jr = ordered_json::array();
    for (const auto& cell : row) jr.push_back(cell ? ordered_json(*cell) : ordered_json(nullptr));
    heat.push_back(jr);
  }
  ordered_json doc;
  doc["accuracy"] = r.accuracy;
  doc["f1_macro"] = r.f1_macro;
  doc["per_entity_f1"] = {{"person", r.per_entity_f1[0]}, {"robot", r.per_entity_f1[1]}};
  doc["f1_zero_denominator"] = r.f1_zero_denominator;
  doc["errors"] = r.errors;
  doc["ecdf"] = ecdf;
  doc["ecdf_empty"] = r.ecdf_empty;
  doc["heatmap"] = heat;
  doc["history"] = {{"train_loss", r.train_loss}, {"val_loss", r.val_loss}};
  doc["timing"] = r.timing ? ordered_json{{"mean_us", r.timing->mean_us}, {"stdev_us", r.timing->stdev_us}}
                           : ordered_json(nullptr);
  return doc;
}

inline EvalReport report_from_json(const nlohmann::json& doc) {
  auto req = [&doc](const char* key) -> const nlohmann::json& {
    if (!doc.contains(key)) throw ConfigError(key, "missing from report");
    return doc.at(key);
  };
  EvalReport r;
  try {
    r.accuracy = req("accuracy").get<double>();
    r.f1_macro = req("f1_macro").get<double>();
    r.per_entity_f1 = {req("per_entity_f1").at("person").get<double>(),
                       req("per_entity_f1").at("robot").get<double>()};
    r.f1_zero_denominator = req("f1_zero_denominator").get<bool>();
    r.errors = req("errors").get<std::vector<double>>();
    for (const auto& p : req("ecdf")) r.ecdf.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    r.ecdf_empty = req("ecdf_empty").get<bool>();
    const auto& heat = req("heatmap");
    if (!heat.is_array() || heat.size() != kGridRows) throw ConfigError("heatmap", "must have 10 rows");
    for (std::size_t y = 0; y < kGridRows; ++y) {
      if (!heat[y].is_array() || heat[y].size() != kGridCols) {
        throw ConfigError("heatmap[" + std::to_string(y) + "]", "must have 9 columns");
      }
      for (std::size_t x = 0; x < kGridCols; ++x) {
        if (!heat[y][x].is_null()) r.heatmap[y][x] = heat[y][x].get<double>();
      }
    }
    r.train_loss = req("history").at("train_loss").get<std::vector<double>>();
    r.val_loss = req("history").at("val_loss").get<std::vector<double>>();
    if (const auto& t = req("timing"); !t.is_null()) {
      r.timing = Timing{t.at("mean_us").get<double>(), t.at("stdev_us").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("$", std::string("malformed report: ") + e.what());
  }
  return r;
}

inline std::string report_text(const EvalReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline void write_report(const EvalReport& r, const std::filesystem::path& path) {
  io_detail::write_text(path, report_text(r));
}

inline EvalReport read_report(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return report_from_json(doc);
}

}  // namespace fawn

#endif  // FAWN_IO_HPP
