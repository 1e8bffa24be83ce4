#include <cstdlib>
#include <functional>
#include <iostream>
#include <stdexcept>

#include <CLI11.hpp>

#include "commands.hpp"
#include "smap/bytes.hpp"
#include "smap/errors.hpp"

namespace {

using namespace smap::cli;

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

constexpr const char* kVersion = "1.0.0";

fs::path default_dir() {
  const char* env = std::getenv("SMAP_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("smap-run");
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

struct Command {
  CLI::App* app = nullptr;
  std::function<json()> run;
  std::function<fs::path()> manifest_path;
};

void write_manifest(const fs::path& path, const CLI::App& sub, int argc, char** argv,
                    const json& result) {
  json m;
  m["tool"] = "smap";
  m["version"] = kVersion;
  m["subcommand"] = sub.get_name();
  m["argv"] = std::vector<std::string>(argv, argv + argc);
  m["effective_config"] = sub.config_to_str(true, false);
  m["result"] = result;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  smap::write_text_file(path, m.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plasma-region classifiers: training, reduced-precision export, uplink budgeting and ROI detection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string manifest;
  app.add_option("--manifest", manifest, "Write the run manifest here instead of next to the output");

  std::vector<Command> commands;
  auto add = [&](CLI::App* sub, std::function<json()> run, std::function<fs::path()> where) {
    commands.push_back({sub, std::move(run), std::move(where)});
  };

  GenDataOptions gd;
  auto* s = app.add_subcommand("gen-data", "Generate a balanced synthetic labelled dataset");
  s->add_option("--n-per-class", gd.n_per_class, "Samples per class")->capture_default_str();
  s->add_option("--seed", gd.seed, "Generator seed")->capture_default_str();
  s->add_option("--out", gd.out, "Output .lds file")->required();
  add(s, [&] { return gen_data(gd); }, [&] { return with_suffix(gd.out, ".manifest.json"); });

  GenStreamOptions gs;
  s = app.add_subcommand("gen-stream", "Generate a synthetic orbit stream with region transitions");
  s->add_option("--plan", gs.plan, "Comma-separated region:length segments (0 SW, 1 IF, 2 MSH, 3 MSP)")
      ->capture_default_str();
  s->add_option("--transition", gs.transition, "Blended samples labelled -1 between regions")
      ->capture_default_str();
  s->add_option("--seed", gs.seed, "Generator seed")->capture_default_str();
  s->add_option("--out", gs.out, "Output .lds file")->required();
  add(s, [&] { return gen_stream(gs); }, [&] { return with_suffix(gs.out, ".manifest.json"); });

  TrainOptions tr;
  s = app.add_subcommand("train", "Train one architecture with early stopping");
  s->add_option("--arch", tr.arch, "baseline | reduced | logistic")->required();
  s->add_option("--lr", tr.lr, "Learning rate (default 1e-6 baseline, 1e-5 otherwise)");
  s->add_option("--patience", tr.patience, "Epochs without improvement before stopping")
      ->capture_default_str();
  s->add_option("--seed", tr.seed, "Initialisation and shuffle seed")->capture_default_str();
  s->add_option("--batch-size", tr.batch_size, "Mini-batch size")->capture_default_str();
  s->add_option("--max-epochs", tr.max_epochs, "Epoch cap")->capture_default_str();
  s->add_option("--train", tr.train, "Training .lds file")->required()->check(CLI::ExistingFile);
  s->add_option("--test", tr.test, "Test .lds file")->required()->check(CLI::ExistingFile);
  s->add_option("--out", tr.out, "Output model file (f32)")->required();
  s->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");
  add(s, [&] { return train(tr); }, [&] { return with_suffix(tr.out, ".manifest.json"); });

  EvalOptions ev;
  s = app.add_subcommand("eval", "Evaluate a model file on a labelled dataset");
  s->add_option("--model", ev.model, "Model file (any format)")->required()->check(CLI::ExistingFile);
  s->add_option("--data", ev.data, "Labelled .lds file")->required()->check(CLI::ExistingFile);
  s->add_option("--confusion-out", ev.confusion_out, "Optional confusion matrix CSV");
  add(s, [&] { return eval(ev); }, [&] { return with_suffix(ev.model, ".eval.manifest.json"); });

  QuantizeOptions qo;
  s = app.add_subcommand("quantize", "Convert model parameters to another precision format");
  s->add_option("--model", qo.model, "Source model file")->required()->check(CLI::ExistingFile);
  s->add_option("--format", qo.format, "f32 | f16 | bf16 | i8")->required();
  s->add_option("--out", qo.out, "Output model file")->required();
  add(s, [&] { return quantize(qo); }, [&] { return with_suffix(qo.out, ".manifest.json"); });

  PackOptions pk;
  s = app.add_subcommand("pack", "Write a model into an upload container");
  s->add_option("--model", pk.model, "Source model file")->required()->check(CLI::ExistingFile);
  s->add_option("--file", pk.file, "Container to write")->required();
  s->add_option("--format", pk.format, "Re-encode to this format first");
  add(s, [&] { return pack(pk); }, [&] { return with_suffix(pk.file, ".manifest.json"); });

  PackOptions up;
  s = app.add_subcommand("unpack", "Validate a container and decode it to an f32 model");
  s->add_option("--file", up.file, "Container to read")->required()->check(CLI::ExistingFile);
  s->add_option("--model", up.model, "Decoded f32 model to write")->required();
  add(s, [&] { return unpack(up); }, [&] { return with_suffix(up.model, ".manifest.json"); });

  BudgetOptions bu;
  s = app.add_subcommand("budget", "Upload time and communication windows for a file");
  s->add_option("--file", bu.file, "File to upload")->required()->check(CLI::ExistingFile);
  s->add_option("--rate", bu.rate, "Uplink rate in bit/s")->capture_default_str();
  s->add_option("--windows", bu.windows, "Window lengths in minutes, cycled")
      ->delimiter(',')
      ->capture_default_str();
  s->add_option("--overhead", bu.overhead, "Protocol bytes per packet")->capture_default_str();
  s->add_option("--packet", bu.packet, "Packet payload bytes (0 = single packet)")->capture_default_str();
  s->add_option("--out", bu.out, "Optional per-window schedule CSV");
  add(s, [&] { return budget(bu); }, [&] {
    return bu.out.empty() ? with_suffix(bu.file, ".budget.manifest.json") : with_suffix(bu.out, ".manifest.json");
  });

  RoiOptions ro;
  s = app.add_subcommand("roi-run", "Stream classification with EWMA filtering and ROI detection");
  s->add_option("--model", ro.model, "Model file (any format)")->required()->check(CLI::ExistingFile);
  s->add_option("--stream", ro.stream, "Stream .lds file")->required()->check(CLI::ExistingFile);
  s->add_option("--alpha", ro.alpha, "EWMA weight of the newest label")->capture_default_str();
  s->add_option("--threshold", ro.threshold, "Indicator exit threshold")->capture_default_str();
  s->add_option("--decay", ro.decay, "Indicator decay per out-of-region step")->capture_default_str();
  s->add_option("--regions", ro.regions, "Comma-separated labels of interest")->capture_default_str();
  s->add_option("--out", ro.out, "Trace CSV")->required();
  s->add_option("--coverage-out", ro.coverage_out, "Coverage CSV (default <out>.coverage.csv)");
  add(s, [&] { return roi_run(ro); }, [&] { return with_suffix(ro.out, ".manifest.json"); });

  ExperimentOptions ex;
  ex.dir = default_dir();
  s = app.add_subcommand("experiment", "Generate data, train every architecture/seed, quantize and report");
  s->add_option("--dir", ex.dir, "Experiment directory (env SMAP_DIR)")->capture_default_str();
  s->add_option("--n-per-class", ex.n_per_class, "Training samples per class")->capture_default_str();
  s->add_option("--test-per-class", ex.test_per_class, "Test samples per class")->capture_default_str();
  s->add_option("--data-seed", ex.data_seed, "Seed for the synthetic data")->capture_default_str();
  s->add_option("--seeds", ex.seeds, "Training seeds")->delimiter(',')->capture_default_str();
  s->add_option("--archs", ex.archs, "Architectures")->delimiter(',')->capture_default_str();
  s->add_option("--formats", ex.formats, "Precision formats")->delimiter(',')->capture_default_str();
  s->add_option("--batch-size", ex.batch_size, "Mini-batch size")->capture_default_str();
  s->add_option("--max-epochs", ex.max_epochs, "Epoch cap")->capture_default_str();
  s->add_option("--patience", ex.patience, "Early-stopping patience")->capture_default_str();
  s->add_option("--stream-plan", ex.stream_plan, "Stream plan for ROI coverage")->capture_default_str();
  s->add_option("--transition", ex.transition, "Transition length in the stream")->capture_default_str();
  s->add_flag("--quiet", ex.quiet, "Suppress per-epoch progress");
  add(s, [&] { return experiment(ex); }, [&] { return ex.dir / "manifest.json"; });

  ReportOptions rp;
  rp.dir = default_dir();
  s = app.add_subcommand("report", "Aggregate accuracy, round-off, size and ROI tables for a model directory");
  s->add_option("--dir", rp.dir, "Directory holding models/ (or the models themselves)")->capture_default_str();
  s->add_option("--data", rp.data, "Labelled test .lds (default <dir>/data/test.lds)");
  s->add_option("--stream", rp.stream, "Stream .lds for ROI coverage (default <dir>/data/stream.lds)");
  add(s, [&] { return report(rp); }, [&] { return rp.dir / "report" / "manifest.json"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  for (const Command& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      const json result = c.run();
      write_manifest(manifest.empty() ? c.manifest_path() : fs::path(manifest), *c.app, argc, argv,
                     result);
      return kOk;
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return kUsage;
    } catch (const smap::ParseError& e) {
      std::cerr << "parse error: " << e.what() << '\n';
      return kIo;
    } catch (const smap::IoError& e) {
      std::cerr << "I/O error: " << e.what() << '\n';
      return kIo;
    } catch (const fs::filesystem_error& e) {
      std::cerr << "I/O error: " << e.what() << '\n';
      return kIo;
    } catch (const smap::DivergenceError& e) {
      std::cerr << "divergence: " << e.what() << '\n';
      return kNumeric;
    } catch (const smap::NumericError& e) {
      std::cerr << "numeric error: " << e.what() << '\n';
      return kNumeric;
    } catch (const smap::ShapeError& e) {
      std::cerr << "shape error: " << e.what() << '\n';
      return kNumeric;
    } catch (const std::invalid_argument& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return kUsage;
    } catch (const std::out_of_range& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return kUsage;
    }
  }
  return kUsage;
}
