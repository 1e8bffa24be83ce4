#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "smap/bytes.hpp"
#include "smap/modelfmt.hpp"
#include "smap/roi.hpp"
#include "smap/synthdata.hpp"
#include "smap/training.hpp"

namespace smap::cli {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError("invalid " + what + ": '" + s + "'");
  return v;
}

std::vector<Segment> parse_plan(const std::string& plan) {
  std::vector<Segment> out;
  for (const std::string& part : split(plan, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      throw UsageError("stream plan entries must be region:length, got '" + part + "'");
    }
    const int region = parse_int(part.substr(0, colon), "plan region");
    const int length = parse_int(part.substr(colon + 1), "plan length");
    if (region < 0 || region > 3 || length < 1) {
      throw UsageError("stream plan entry out of range: '" + part + "'");
    }
    out.push_back({region, static_cast<std::size_t>(length)});
  }
  if (out.empty()) throw UsageError("stream plan is empty");
  return out;
}

std::set<int> parse_regions(const std::string& s) {
  std::set<int> out;
  for (const std::string& part : split(s, ',')) {
    const int r = parse_int(part, "region");
    if (r < 0 || r > 3) throw UsageError("ROI regions must be 0..3, got " + part);
    out.insert(r);
  }
  if (out.empty()) throw UsageError("ROI region set is empty");
  return out;
}

ArchKind arch_arg(const std::string& s) {
  try {
    return parse_arch(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

PrecisionFormat format_arg(const std::string& s) {
  try {
    return parse_format(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

PreparedDataset load_labeled(const fs::path& path) {
  const std::vector<LabeledSample> samples = read_lds(path);
  for (const LabeledSample& s : samples) {
    if (s.label < 0) {
      throw UsageError(path.string() + " contains undefined (-1) labels; use it as a stream");
    }
  }
  return prepare(samples);
}

ModelParams load_params(const fs::path& path) {
  return dequantize_for_inference(load_model(path));
}

json confusion_json(const ConfusionMatrix& m) {
  json rows = json::array();
  for (const auto& r : m) rows.push_back(r);
  return rows;
}

void print_confusion(const ConfusionMatrix& m) {
  std::cout << "confusion (rows true SW/IF/MSH/MSP, columns predicted):\n";
  for (const auto& r : m) {
    for (std::size_t v : r) std::cout << std::setw(7) << v;
    std::cout << '\n';
  }
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

json gen_data(const GenDataOptions& o) {
  if (o.n_per_class == 0) throw UsageError("--n-per-class must be >= 1");
  const LabeledDataset ds = gen_dataset(o.n_per_class, o.seed);
  write_lds(o.out, ds.samples);
  std::cout << "wrote " << ds.samples.size() << " samples to " << o.out.string() << '\n';
  return {{"samples", ds.samples.size()}, {"class_counts", ds.class_counts()}};
}

json gen_stream(const GenStreamOptions& o) {
  const std::vector<Segment> plan = parse_plan(o.plan);
  const LabeledStream st = gen_orbit_stream(plan, o.transition, o.seed);
  write_lds(o.out, st.samples);
  std::cout << "wrote " << st.samples.size() << " stream samples to " << o.out.string() << '\n';
  return {{"samples", st.samples.size()}};
}

json train(const TrainOptions& o) {
  const ArchKind kind = arch_arg(o.arch);
  TrainConfig cfg = TrainConfig::for_arch(kind, o.seed);
  if (o.lr > 0.0) cfg.learning_rate = o.lr;
  cfg.patience = o.patience;
  cfg.batch_size = o.batch_size;
  cfg.max_epochs = o.max_epochs;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const PreparedDataset train_set = load_labeled(o.train);
  const PreparedDataset test_set = load_labeled(o.test);

  const TrainResult r = train(kind, train_set, test_set, cfg, [&](const EpochRecord& e) {
    if (!o.quiet) {
      std::cout << "epoch " << e.epoch << "  loss " << std::fixed << std::setprecision(5)
                << e.train_loss << "  test accuracy " << std::setprecision(4) << e.test_accuracy
                << std::defaultfloat << std::endl;
    }
  });
  save_model(o.out, quantize_model(r.model, PrecisionFormat::F32));
  write_text_file(sibling(o.out, ".train.csv"), train_report_csv(r.report));
  write_text_file(sibling(o.out, ".confusion.csv"), confusion_csv(r.report.confusion));

  const double best_acc = r.report.epochs.at(static_cast<std::size_t>(r.report.best_epoch - 1)).test_accuracy;
  std::cout << arch_name(kind) << " seed " << o.seed << ": best epoch " << r.report.best_epoch
            << " of " << r.report.epochs_run << ", test accuracy " << best_acc << '\n';
  return {{"learning_rate", cfg.learning_rate},
          {"best_epoch", r.report.best_epoch},
          {"epochs_run", r.report.epochs_run},
          {"best_accuracy", best_acc},
          {"confusion", confusion_json(r.report.confusion)}};
}

json eval(const EvalOptions& o) {
  const QuantizedModel qm = load_model(o.model);
  const PreparedDataset data = load_labeled(o.data);
  const Evaluation e = evaluate(dequantize_for_inference(qm), data);
  std::cout << arch_name(qm.arch.kind) << " (" << format_name(qm.format) << ") accuracy "
            << e.accuracy << " on " << data.size() << " samples\n";
  print_confusion(e.confusion);
  if (!o.confusion_out.empty()) write_text_file(o.confusion_out, confusion_csv(e.confusion));
  return {{"arch", arch_name(qm.arch.kind)},
          {"format", format_name(qm.format)},
          {"samples", data.size()},
          {"accuracy", e.accuracy},
          {"confusion", confusion_json(e.confusion)}};
}

json quantize(const QuantizeOptions& o) {
  const PrecisionFormat fmt = format_arg(o.format);
  const QuantizedModel src = load_model(o.model);
  const QuantizedModel qm = quantize_model(dequantize_for_inference(src), fmt);
  save_model(o.out, qm);
  std::cout << "quantized " << arch_name(qm.arch.kind) << " to " << format_name(fmt)
            << ": round-off norm " << qm.roundoff << ", saturated values " << qm.saturated
            << ", file " << file_bytes(qm.arch.kind, fmt) << " bytes\n";
  return {{"arch", arch_name(qm.arch.kind)},
          {"source_format", format_name(src.format)},
          {"format", format_name(fmt)},
          {"roundoff", qm.roundoff},
          {"saturated", qm.saturated},
          {"file_bytes", file_bytes(qm.arch.kind, fmt)}};
}

json pack(const PackOptions& o) {
  QuantizedModel qm = load_model(o.model);
  if (!o.format.empty() && format_arg(o.format) != qm.format) {
    qm = quantize_model(dequantize_for_inference(qm), format_arg(o.format));
  }
  const std::vector<std::uint8_t> bytes = serialize(qm);
  write_file(o.file, bytes);
  const std::size_t blob = qm.blob_bytes();
  std::cout << "packed " << arch_name(qm.arch.kind) << " (" << format_name(qm.format) << ") into "
            << o.file.string() << ": " << bytes.size() << " bytes, " << blob << " parameter bytes, "
            << bytes.size() - blob << " bytes of framing\n";
  return {{"arch", arch_name(qm.arch.kind)},
          {"format", format_name(qm.format)},
          {"file_bytes", bytes.size()},
          {"blob_bytes", blob}};
}

json unpack(const PackOptions& o) {
  const QuantizedModel qm = load_model(o.file);
  const ModelParams params = dequantize_for_inference(qm);
  save_model(o.model, quantize_model(params, PrecisionFormat::F32));
  const ParamCount pc = param_count(qm.arch);
  std::cout << "unpacked " << arch_name(qm.arch.kind) << " (" << format_name(qm.format) << ", "
            << pc.total << " parameters) into " << o.model.string() << " as f32\n";
  return {{"arch", arch_name(qm.arch.kind)},
          {"source_format", format_name(qm.format)},
          {"parameters", pc.total}};
}

json budget(const BudgetOptions& o) {
  LinkBudget b;
  b.rate_bps = o.rate;
  b.window_minutes = o.windows;
  b.overhead_bytes = o.overhead;
  b.packet_payload = o.packet;
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::size_t bytes = fs::file_size(o.file);
  const double seconds = upload_time(bytes, b);
  const WindowSchedule s = window_schedule(bytes, b);
  std::cout << o.file.string() << ": " << bytes << " bytes (" << s.total_bytes
            << " on the link), " << std::fixed << std::setprecision(2) << seconds << " s ("
            << seconds / 3600.0 << " h) at " << o.rate << " bit/s, " << s.total_windows
            << " communication window(s)\n"
            << std::defaultfloat;
  std::ostringstream csv;
  csv << "window,minutes,capacity_bytes,bytes_sent\n";
  json windows = json::array();
  for (const WindowUse& w : s.windows) {
    const double minutes = b.window_minutes[w.window % b.window_minutes.size()];
    csv << w.window << ',' << minutes << ',' << b.window_capacity(w.window) << ',' << w.bytes << '\n';
    windows.push_back({{"window", w.window}, {"bytes", w.bytes}});
  }
  if (!o.out.empty()) write_text_file(o.out, csv.str());
  return {{"file_bytes", bytes},
          {"transmitted_bytes", s.total_bytes},
          {"upload_seconds", seconds},
          {"windows_needed", s.total_windows},
          {"schedule", windows}};
}

json roi_run(const RoiOptions& o) {
  RoiRunConfig cfg;
  cfg.alpha = o.alpha;
  cfg.roi.threshold = o.threshold;
  cfg.roi.decay = o.decay;
  cfg.roi.regions = parse_regions(o.regions);
  try {
    cfg.roi.validate();
    EwmaFilter check(cfg.alpha);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const ModelParams model = load_params(o.model);
  LabeledStream stream;
  stream.samples = read_lds(o.stream);
  const std::vector<TraceRecord> trace = run_stream(model, stream, cfg);
  const auto cov = coverage_report(trace);
  write_text_file(o.out, trace_csv(trace));
  const fs::path cov_path = o.coverage_out.empty() ? sibling(o.out, ".coverage.csv") : o.coverage_out;
  write_text_file(cov_path, coverage_csv(cov));

  std::size_t in_roi = 0;
  for (const TraceRecord& r : trace) in_roi += r.in_roi ? 1 : 0;
  std::cout << trace.size() << " samples, " << in_roi << " inside the region of interest\n";
  json coverage = json::object();
  for (const CoverageRow& row : cov) {
    std::cout << "  " << std::setw(9) << std::left << region_name(row.label) << std::right
              << std::setw(6) << row.in_roi << " /" << std::setw(6) << row.total() << "  "
              << std::fixed << std::setprecision(2) << row.percent() << "%\n"
              << std::defaultfloat;
    coverage[std::string(region_name(row.label))] = {
        {"in_roi", row.in_roi}, {"total", row.total()}, {"percent", row.percent()}};
  }
  return {{"samples", trace.size()}, {"in_roi", in_roi}, {"coverage", coverage}};
}

json experiment(const ExperimentOptions& o) {
  const fs::path data_dir = o.dir / "data";
  const fs::path model_dir = o.dir / "models";
  const fs::path run_dir = o.dir / "runs";
  fs::create_directories(data_dir);
  fs::create_directories(model_dir);
  fs::create_directories(run_dir);
  std::vector<ArchKind> archs;
  for (const std::string& a : o.archs) archs.push_back(arch_arg(a));
  std::vector<PrecisionFormat> formats;
  for (const std::string& f : o.formats) formats.push_back(format_arg(f));

  gen_data({o.n_per_class, o.data_seed, data_dir / "train.lds"});
  gen_data({o.test_per_class, derive_seed(o.data_seed, 1), data_dir / "test.lds"});
  gen_stream({o.stream_plan, o.transition, derive_seed(o.data_seed, 2), data_dir / "stream.lds"});

  json runs = json::array();
  for (ArchKind kind : archs) {
    for (std::uint64_t seed : o.seeds) {
      const std::string run = std::string(arch_name(kind)) + "_s" + std::to_string(seed);
      TrainOptions t;
      t.arch = std::string(arch_name(kind));
      t.seed = seed;
      t.patience = o.patience;
      t.batch_size = o.batch_size;
      t.max_epochs = o.max_epochs;
      t.train = data_dir / "train.lds";
      t.test = data_dir / "test.lds";
      t.out = model_dir / (run + "_f32.smap");
      t.quiet = o.quiet;
      json facts = train(t);
      fs::rename(sibling(t.out, ".train.csv"), run_dir / (run + ".train.csv"));
      fs::rename(sibling(t.out, ".confusion.csv"), run_dir / (run + ".confusion.csv"));
      for (PrecisionFormat f : formats) {
        if (f == PrecisionFormat::F32) continue;
        quantize({t.out, std::string(format_name(f)),
                  model_dir / (run + "_" + std::string(format_name(f)) + ".smap")});
      }
      facts["run"] = run;
      runs.push_back(facts);
    }
  }
  json rep = report({o.dir, {}, {}});
  return {{"runs", runs}, {"report", rep}};
}

json report(const ReportOptions& o) {
  const fs::path model_dir = fs::is_directory(o.dir / "models") ? o.dir / "models" : o.dir;
  const fs::path data_path = o.data.empty() ? o.dir / "data" / "test.lds" : o.data;
  fs::path stream_path = o.stream;
  if (stream_path.empty() && fs::exists(o.dir / "data" / "stream.lds")) {
    stream_path = o.dir / "data" / "stream.lds";
  }
  const fs::path out_dir = o.dir / "report";
  fs::create_directories(out_dir);

  struct Entry {
    std::string run;
    fs::path path;
    QuantizedModel qm;
  };
  std::vector<Entry> entries;
  for (const auto& de : fs::directory_iterator(model_dir)) {
    if (de.path().extension() != ".smap") continue;
    const std::string stem = de.path().stem().string();
    const auto cut = stem.rfind('_');
    Entry e{cut == std::string::npos ? stem : stem.substr(0, cut), de.path(), load_model(de.path())};
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw IoError("no .smap models found in " + model_dir.string());
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.qm.arch.kind, a.run, a.qm.format) < std::tie(b.qm.arch.kind, b.run, b.qm.format);
  });

  const PreparedDataset test = load_labeled(data_path);
  LabeledStream stream;
  if (!stream_path.empty()) stream.samples = read_lds(stream_path);

  // Reference F32 parameters per run, for round-off norms and accuracy deltas.
  std::map<std::string, ModelParams> f32_params;
  std::map<std::string, double> f32_accuracy;
  for (const Entry& e : entries) {
    if (e.qm.format == PrecisionFormat::F32) f32_params.emplace(e.run, dequantize_for_inference(e.qm));
  }

  std::ostringstream acc_csv, cov_csv, files_csv;
  acc_csv << "run,arch,format,accuracy,delta_pp_vs_f32,roundoff\n";
  cov_csv << "run,arch,format,label,region,in_roi,outside,total,percent_in_roi\n";
  files_csv << "file,arch,format,file_bytes,upload_seconds,windows_80min\n";
  using Key = std::pair<ArchKind, PrecisionFormat>;
  std::map<Key, std::vector<double>> accs, deltas, roundoffs;
  std::map<Key, ConfusionMatrix> confusions;
  json rows = json::array();
  const LinkBudget link;

  // F32 first so deltas are available for the other formats of the same run.
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return (a.qm.format == PrecisionFormat::F32) > (b.qm.format == PrecisionFormat::F32);
  });
  for (const Entry& e : entries) {
    const ModelParams params = dequantize_for_inference(e.qm);
    const Evaluation ev = evaluate(params, test);
    const Key key{e.qm.arch.kind, e.qm.format};
    const std::string arch(arch_name(e.qm.arch.kind));
    const std::string fmt(format_name(e.qm.format));

    double delta = 0.0, roundoff = 0.0;
    if (e.qm.format == PrecisionFormat::F32) f32_accuracy[e.run] = ev.accuracy;
    const bool has_ref = f32_accuracy.count(e.run) != 0;
    if (has_ref) delta = 100.0 * (ev.accuracy - f32_accuracy[e.run]);
    if (f32_params.count(e.run) != 0) roundoff = roundoff_norm(f32_params.at(e.run), params);

    accs[key].push_back(ev.accuracy);
    if (has_ref) deltas[key].push_back(delta);
    roundoffs[key].push_back(roundoff);
    auto& cm = confusions[key];
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      for (std::size_t j = 0; j < kNumClasses; ++j) cm[i][j] += ev.confusion[i][j];
    }
    acc_csv << e.run << ',' << arch << ',' << fmt << ',' << ev.accuracy << ',' << delta << ','
            << roundoff << '\n';

    const std::size_t bytes = fs::file_size(e.path);
    files_csv << e.path.filename().string() << ',' << arch << ',' << fmt << ',' << bytes << ','
              << upload_time(bytes, link) << ',' << window_schedule(bytes, link).total_windows << '\n';

    json row{{"run", e.run}, {"arch", arch}, {"format", fmt}, {"accuracy", ev.accuracy},
             {"roundoff", roundoff}};
    if (!stream.samples.empty()) {
      const auto trace = run_stream(params, stream);
      for (const CoverageRow& c : coverage_report(trace)) {
        cov_csv << e.run << ',' << arch << ',' << fmt << ',' << c.label << ','
                << region_name(c.label) << ',' << c.in_roi << ',' << c.outside << ','
                << c.total() << ',' << c.percent() << '\n';
      }
    }
    rows.push_back(row);
  }

  std::ostringstream summary_csv, delta_csv, roundoff_csv, summary_txt;
  summary_csv << "arch,format,runs,mean_accuracy,std_accuracy,min_accuracy,max_accuracy\n";
  delta_csv << "arch,format,runs,mean_delta_pp,std_delta_pp,min_delta_pp,max_delta_pp\n";
  roundoff_csv << "arch,format,runs,mean_roundoff,std_roundoff\n";
  summary_txt << std::fixed;
  summary_txt << "Test accuracy over runs (mean +- std), accuracy change vs f32 in percentage points\n\n";
  summary_txt << std::left << std::setw(10) << "arch" << std::setw(7) << "format" << std::right
              << std::setw(6) << "runs" << std::setw(18) << "accuracy %" << std::setw(18)
              << "delta pp" << std::setw(14) << "round-off" << '\n';
  for (const auto& [key, v] : accs) {
    const std::string arch(arch_name(key.first));
    const std::string fmt(format_name(key.second));
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    summary_csv << arch << ',' << fmt << ',' << v.size() << ',' << mean(v) << ',' << stdev(v) << ','
                << *mn << ',' << *mx << '\n';
    const std::vector<double>& d = deltas[key];
    if (!d.empty()) {
      const auto [dmn, dmx] = std::minmax_element(d.begin(), d.end());
      delta_csv << arch << ',' << fmt << ',' << d.size() << ',' << mean(d) << ',' << stdev(d) << ','
                << *dmn << ',' << *dmx << '\n';
    }
    const std::vector<double>& r = roundoffs[key];
    roundoff_csv << arch << ',' << fmt << ',' << r.size() << ',' << mean(r) << ',' << stdev(r) << '\n';
    write_text_file(out_dir / ("confusion_" + arch + "_" + fmt + ".csv"), confusion_csv(confusions[key]));

    std::ostringstream acc_cell, delta_cell;
    acc_cell << std::fixed << std::setprecision(2) << 100.0 * mean(v) << " +- " << 100.0 * stdev(v);
    delta_cell << std::fixed << std::setprecision(2) << mean(d) << " +- " << stdev(d);
    summary_txt << std::left << std::setw(10) << arch << std::setw(7) << fmt << std::right
                << std::setw(6) << v.size() << std::setw(18) << acc_cell.str() << std::setw(18)
                << (d.empty() ? std::string("n/a") : delta_cell.str()) << std::setw(14)
                << std::setprecision(4) << mean(r) << '\n';
  }

  write_text_file(out_dir / "sizes.csv", size_report_csv(size_report(link)));
  write_text_file(out_dir / "model_files.csv", files_csv.str());
  write_text_file(out_dir / "accuracy.csv", acc_csv.str());
  write_text_file(out_dir / "accuracy_summary.csv", summary_csv.str());
  write_text_file(out_dir / "accuracy_delta.csv", delta_csv.str());
  write_text_file(out_dir / "roundoff.csv", roundoff_csv.str());
  if (!stream.samples.empty()) write_text_file(out_dir / "roi_coverage.csv", cov_csv.str());
  write_text_file(out_dir / "summary.txt", summary_txt.str());
  std::cout << summary_txt.str();
  std::cout << "report written to " << out_dir.string() << '\n';
  return {{"models", rows}, {"test_samples", test.size()}, {"stream_samples", stream.samples.size()}};
}

}  // namespace smap::cli
