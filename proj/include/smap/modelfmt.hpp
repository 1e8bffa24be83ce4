#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smap/quantize.hpp"

namespace smap {

// Model container layout (little-endian):
//
//   header   "SMAP" | u16 version | u8 arch | u8 format | u8 layer count        9 bytes
//   layer    u8 type | 6 x u16 config | u32 weight bytes | u32 bias bytes      21 bytes each
//   [I8]     f32 dequantization scale                                            4 bytes
//   blobs    weight blob then bias blob, per layer in chain order
//
// Config words: Conv3D = in_ch, out_ch, kD<<8|sD, kH<<8|sH, kW<<8|sW, activation;
//               Linear = in, out, activation, 0, 0, 0.
inline constexpr char kModelMagic[] = "SMAP";
inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::size_t kHeaderBytes = 9;
inline constexpr std::size_t kLayerRecordBytes = 21;
inline constexpr std::size_t kScaleBytes = 4;

std::vector<std::uint8_t> serialize(const QuantizedModel& qm);
std::vector<std::uint8_t> serialize(const ModelParams& model);  // F32

// Raises ParseError naming the offending byte offset. The returned roundoff is 0
// because the original parameters are not part of the file.
QuantizedModel deserialize(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const QuantizedModel& qm);
QuantizedModel load_model(const std::filesystem::path& path);

std::size_t blob_bytes(ArchKind kind, PrecisionFormat fmt);
std::size_t file_bytes(ArchKind kind, PrecisionFormat fmt);

struct LinkBudget {
  double rate_bps = 2000.0;
  std::vector<double> window_minutes{80.0};  // cycled when a file needs more windows
  std::size_t overhead_bytes = 0;            // protocol bytes added per packet
  std::size_t packet_payload = 0;            // 0 = whole file in one packet

  void validate() const;
  // Payload plus per-packet overhead.
  std::size_t transmitted_bytes(std::size_t payload) const;
  std::size_t window_capacity(std::size_t window) const;
};

double upload_time(std::size_t bytes, const LinkBudget& budget);

struct WindowUse {
  std::size_t window = 0;
  std::size_t bytes = 0;
};

struct WindowSchedule {
  std::vector<WindowUse> windows;
  std::size_t total_windows = 0;
  std::size_t total_bytes = 0;
};

// Greedy fill: each window carries min(remaining, rate * seconds / 8) bytes.
WindowSchedule window_schedule(std::size_t bytes, const LinkBudget& budget);

struct SizeRow {
  ArchKind arch;
  PrecisionFormat format;
  std::size_t blob_bytes;
  std::size_t file_bytes;
  double blob_ratio;             // vs the same architecture in F32
  double file_ratio;             // vs the same architecture in F32
  double relative_to_baseline;   // file bytes vs Baseline F32 file bytes
  double upload_seconds;         // whole file, default link budget
  double reference_mb;           // published exchange-format size
  double reference_relative;
  std::string reference_upload;
};

std::vector<SizeRow> size_report(const LinkBudget& budget = {});
std::string size_report_csv(const std::vector<SizeRow>& rows);

}  // namespace smap
