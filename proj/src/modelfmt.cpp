#include "smap/modelfmt.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "smap/bytes.hpp"

namespace smap {

namespace {

using ConfigWords = std::array<std::uint16_t, 6>;

std::uint16_t narrow16(std::size_t v) {
  if (v > std::numeric_limits<std::uint16_t>::max()) {
    throw ShapeError("layer configuration value " + std::to_string(v) + " exceeds 16 bits");
  }
  return static_cast<std::uint16_t>(v);
}

std::uint16_t pack_axis(std::size_t kernel, std::size_t stride) {
  if (kernel > 0xFF || stride > 0xFF) throw ShapeError("kernel/stride extent exceeds 8 bits");
  return static_cast<std::uint16_t>((kernel << 8) | stride);
}

ConfigWords config_words(const LayerSpec& l) {
  const auto act = static_cast<std::uint16_t>(l.activation);
  if (l.type == LayerType::Conv3D) {
    return {narrow16(l.in_channels), narrow16(l.out_channels), pack_axis(l.kernel.d, l.stride.d),
            pack_axis(l.kernel.h, l.stride.h), pack_axis(l.kernel.w, l.stride.w), act};
  }
  return {narrow16(l.in_features), narrow16(l.out_features), act, 0, 0, 0};
}

std::uint32_t narrow32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("blob exceeds 4 GiB");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize(const QuantizedModel& qm) {
  const auto specs = qm.arch.parametric_layers();
  if (specs.size() != qm.layers.size()) throw ShapeError("serialize: layer count mismatch");
  const std::size_t width = bytes_per_scalar(qm.format);

  ByteWriter w;
  w.tag(std::string_view(kModelMagic, 4));
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(qm.arch.kind));
  w.u8(static_cast<std::uint8_t>(qm.format));
  w.u8(static_cast<std::uint8_t>(specs.size()));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& l = *specs[i];
    const EncodedLayer& e = qm.layers[i];
    if (e.weight.size() != l.weight_count() * width || e.bias.size() != l.bias_count() * width) {
      throw ShapeError("serialize: blob length does not match layer " + std::to_string(i));
    }
    w.u8(static_cast<std::uint8_t>(l.type));
    for (std::uint16_t c : config_words(l)) w.u16(c);
    w.u32(narrow32(e.weight.size()));
    w.u32(narrow32(e.bias.size()));
  }
  if (qm.format == PrecisionFormat::I8) w.f32(qm.scale);
  for (const EncodedLayer& e : qm.layers) {
    w.bytes(e.weight);
    w.bytes(e.bias);
  }
  return std::move(w).take();
}

std::vector<std::uint8_t> serialize(const ModelParams& model) {
  return serialize(quantize_model(model, PrecisionFormat::F32));
}

QuantizedModel deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_tag(std::string_view(kModelMagic, 4), "model magic");

  std::size_t at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw ParseError("unsupported model version " + std::to_string(version), at);
  }
  at = r.offset();
  const std::uint8_t arch_tag = r.u8();
  if (arch_tag > static_cast<std::uint8_t>(ArchKind::Logistic)) {
    throw ParseError("unknown architecture tag " + std::to_string(arch_tag), at);
  }
  at = r.offset();
  const std::uint8_t fmt_tag = r.u8();
  if (fmt_tag > static_cast<std::uint8_t>(PrecisionFormat::I8)) {
    throw ParseError("unknown format tag " + std::to_string(fmt_tag), at);
  }

  QuantizedModel qm;
  qm.arch = ArchitectureSpec::make(static_cast<ArchKind>(arch_tag));
  qm.format = static_cast<PrecisionFormat>(fmt_tag);
  const auto specs = qm.arch.parametric_layers();
  const std::size_t width = bytes_per_scalar(qm.format);

  at = r.offset();
  const std::uint8_t layer_count = r.u8();
  if (layer_count != specs.size()) {
    throw ParseError("layer count " + std::to_string(layer_count) + " does not match " +
                         std::string(arch_name(qm.arch.kind)) + " (" +
                         std::to_string(specs.size()) + ")",
                     at);
  }

  std::vector<std::pair<std::size_t, std::size_t>> lengths;
  for (const LayerSpec* l : specs) {
    at = r.offset();
    const std::uint8_t type = r.u8();
    if (type != static_cast<std::uint8_t>(l->type)) {
      throw ParseError("layer type " + std::to_string(type) + " does not match architecture", at);
    }
    at = r.offset();
    ConfigWords words{};
    for (std::uint16_t& c : words) c = r.u16();
    if (words != config_words(*l)) throw ParseError("layer configuration does not match architecture", at);
    at = r.offset();
    const std::size_t wlen = r.u32();
    const std::size_t blen = r.u32();
    if (wlen != l->weight_count() * width || blen != l->bias_count() * width) {
      throw ParseError("declared blob lengths do not match parameter counts", at);
    }
    lengths.emplace_back(wlen, blen);
  }
  if (qm.format == PrecisionFormat::I8) {
    at = r.offset();
    qm.scale = r.f32();
    if (!std::isfinite(qm.scale) || !(qm.scale > 0.0f)) throw ParseError("invalid Int8 scale", at);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EncodedLayer e;
    e.weight_shape = specs[i]->weight_shape();
    e.bias_shape = specs[i]->bias_shape();
    const std::size_t weight_at = r.offset();
    const auto wb = r.bytes(lengths[i].first, "weight blob");
    const std::size_t bias_at = r.offset();
    const auto bb = r.bytes(lengths[i].second, "bias blob");
    e.weight.assign(wb.begin(), wb.end());
    e.bias.assign(bb.begin(), bb.end());
    if (qm.format == PrecisionFormat::I8) {
      for (std::size_t j = 0; j < e.weight.size(); ++j) {
        if (e.weight[j] == 0x80) throw ParseError("Int8 code -128 in weight blob", weight_at + j);
      }
      for (std::size_t j = 0; j < e.bias.size(); ++j) {
        if (e.bias[j] == 0x80) throw ParseError("Int8 code -128 in bias blob", bias_at + j);
      }
    }
    qm.layers.push_back(std::move(e));
  }
  if (r.remaining() != 0) {
    throw ParseError(std::to_string(r.remaining()) + " trailing bytes after last blob", r.offset());
  }
  return qm;
}

void save_model(const std::filesystem::path& path, const QuantizedModel& qm) {
  write_file(path, serialize(qm));
}

QuantizedModel load_model(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::size_t blob_bytes(ArchKind kind, PrecisionFormat fmt) {
  return param_count(ArchitectureSpec::make(kind)).total * bytes_per_scalar(fmt);
}

std::size_t file_bytes(ArchKind kind, PrecisionFormat fmt) {
  const std::size_t layers = ArchitectureSpec::make(kind).parametric_layers().size();
  return kHeaderBytes + layers * kLayerRecordBytes +
         (fmt == PrecisionFormat::I8 ? kScaleBytes : 0) + blob_bytes(kind, fmt);
}

void LinkBudget::validate() const {
  if (!(rate_bps > 0.0) || !std::isfinite(rate_bps)) throw std::invalid_argument("uplink rate must be > 0");
  for (double m : window_minutes) {
    if (!(m > 0.0)) throw std::invalid_argument("window lengths must be > 0 minutes");
  }
}

std::size_t LinkBudget::transmitted_bytes(std::size_t payload) const {
  if (payload == 0) return 0;
  const std::size_t packets = packet_payload == 0 ? 1 : (payload + packet_payload - 1) / packet_payload;
  return payload + packets * overhead_bytes;
}

std::size_t LinkBudget::window_capacity(std::size_t window) const {
  if (window_minutes.empty()) throw std::invalid_argument("no communication windows configured");
  const double minutes = window_minutes[window % window_minutes.size()];
  return static_cast<std::size_t>(std::floor(rate_bps * minutes * 60.0 / 8.0));
}

double upload_time(std::size_t bytes, const LinkBudget& budget) {
  budget.validate();
  return static_cast<double>(budget.transmitted_bytes(bytes)) * 8.0 / budget.rate_bps;
}

WindowSchedule window_schedule(std::size_t bytes, const LinkBudget& budget) {
  budget.validate();
  if (budget.window_minutes.empty()) throw std::invalid_argument("no communication windows configured");
  WindowSchedule s;
  std::size_t remaining = budget.transmitted_bytes(bytes);
  s.total_bytes = remaining;
  for (std::size_t k = 0; remaining > 0; ++k) {
    const std::size_t cap = budget.window_capacity(k);
    if (cap == 0) throw std::invalid_argument("window too short to carry any data");
    const std::size_t sent = std::min(remaining, cap);
    s.windows.push_back({k, sent});
    remaining -= sent;
  }
  s.total_windows = s.windows.size();
  return s;
}

std::vector<SizeRow> size_report(const LinkBudget& budget) {
  struct Reference {
    double mb, relative;
    const char* upload;
  };
  // Published exchange-format sizes for the same networks; Int8 rows there were extrapolated.
  static constexpr Reference kReference[3][4] = {
      {{3.668, 1.0, "4h"}, {1.847, 0.5, "2h"}, {1.847, 0.5, "2h"}, {0.937, 0.26, "1h"}},
      {{0.193, 0.05, "13 min"}, {0.103, 0.03, "7 min"}, {0.103, 0.03, "7 min"}, {0.058, 0.016, "4 min"}},
      {{0.042, 0.011, "3 min"}, {0.025, 0.007, "2 min"}, {0.025, 0.007, "2 min"}, {0.017, 0.005, "1 min"}},
  };
  const double baseline_file = static_cast<double>(file_bytes(ArchKind::Baseline, PrecisionFormat::F32));
  std::vector<SizeRow> rows;
  for (ArchKind a : kAllArchs) {
    const double blob32 = static_cast<double>(blob_bytes(a, PrecisionFormat::F32));
    const double file32 = static_cast<double>(file_bytes(a, PrecisionFormat::F32));
    for (PrecisionFormat f : kAllFormats) {
      const Reference& ref = kReference[static_cast<int>(a)][static_cast<int>(f)];
      SizeRow r{a, f, blob_bytes(a, f), file_bytes(a, f), 0, 0, 0, 0, ref.mb, ref.relative, ref.upload};
      r.blob_ratio = static_cast<double>(r.blob_bytes) / blob32;
      r.file_ratio = static_cast<double>(r.file_bytes) / file32;
      r.relative_to_baseline = static_cast<double>(r.file_bytes) / baseline_file;
      r.upload_seconds = upload_time(r.file_bytes, budget);
      rows.push_back(r);
    }
  }
  return rows;
}

std::string size_report_csv(const std::vector<SizeRow>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << "arch,format,blob_bytes,file_bytes,blob_ratio,file_ratio,relative_to_baseline_f32,"
        "upload_seconds,reference_mb,reference_relative,reference_upload\n";
  for (const SizeRow& r : rows) {
    os << arch_name(r.arch) << ',' << format_name(r.format) << ',' << r.blob_bytes << ','
       << r.file_bytes << ',' << r.blob_ratio << ',' << r.file_ratio << ','
       << r.relative_to_baseline << ',' << r.upload_seconds << ',' << r.reference_mb << ','
       << r.reference_relative << ',' << r.reference_upload << '\n';
  }
  return os.str();
}

}  // namespace smap
