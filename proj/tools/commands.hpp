#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace smap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Raised for malformed flag values that CLI11 cannot type-check on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenDataOptions {
  std::size_t n_per_class = 500;
  std::uint64_t seed = 42;
  fs::path out;
};

struct GenStreamOptions {
  std::string plan = "3:300,2:300,1:100,0:800";
  std::size_t transition = 20;
  std::uint64_t seed = 7;
  fs::path out;
};

struct TrainOptions {
  std::string arch;
  double lr = 0.0;  // 0 selects the architecture default
  int patience = 10;
  std::uint64_t seed = 42;
  std::size_t batch_size = 32;
  int max_epochs = 300;
  fs::path train;
  fs::path test;
  fs::path out;
  bool quiet = false;
};

struct EvalOptions {
  fs::path model;
  fs::path data;
  fs::path confusion_out;
};

struct QuantizeOptions {
  fs::path model;
  std::string format;
  fs::path out;
};

struct PackOptions {
  fs::path model;
  fs::path file;
  std::string format;  // empty keeps the source format
};

struct BudgetOptions {
  fs::path file;
  double rate = 2000.0;
  std::vector<double> windows{80.0};
  std::size_t overhead = 0;
  std::size_t packet = 0;
  fs::path out;
};

struct RoiOptions {
  fs::path model;
  fs::path stream;
  double alpha = 0.1;
  double threshold = 0.5;
  double decay = 0.001;
  std::string regions = "1,2";
  fs::path out;
  fs::path coverage_out;
};

struct ExperimentOptions {
  fs::path dir;
  std::size_t n_per_class = 500;
  std::size_t test_per_class = 125;
  std::uint64_t data_seed = 1;
  std::vector<std::uint64_t> seeds{42, 84, 168, 336};
  std::vector<std::string> archs{"baseline", "reduced", "logistic"};
  std::vector<std::string> formats{"f32", "f16", "bf16", "i8"};
  std::size_t batch_size = 1;
  int max_epochs = 300;
  int patience = 10;
  std::string stream_plan = "3:300,2:300,1:100,0:800";
  std::size_t transition = 20;
  bool quiet = false;
};

struct ReportOptions {
  fs::path dir;
  fs::path data;    // defaults to <dir>/data/test.lds
  fs::path stream;  // defaults to <dir>/data/stream.lds when present
};

// Each command performs its work, prints a short human-readable summary and
// returns the facts worth recording in the run manifest.
json gen_data(const GenDataOptions& o);
json gen_stream(const GenStreamOptions& o);
json train(const TrainOptions& o);
json eval(const EvalOptions& o);
json quantize(const QuantizeOptions& o);
json pack(const PackOptions& o);
json unpack(const PackOptions& o);
json budget(const BudgetOptions& o);
json roi_run(const RoiOptions& o);
json experiment(const ExperimentOptions& o);
json report(const ReportOptions& o);

}  // namespace smap::cli
