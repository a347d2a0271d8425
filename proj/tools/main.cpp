// detkit command-line tool: every toolkit module behind one executable with
// reproducible seeds and machine-readable output. Exit codes: 0 success,
// 1 domain error, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "detkit/detkit.hpp"

namespace fs = std::filesystem;
using detkit::io::json;

namespace {

json base_report(const std::string& command) {
  return json{{"tool", "detkit"}, {"version", detkit::version_string()}, {"command", command}};
}

bool stdout_is_tty() { return ::isatty(::fileno(stdout)) == 1; }

void emit(const json& report, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    detkit::io::write_file(out_path, report.dump(2) + "\n");
  }
}

std::string format_fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

/// Deterministic parallel map: worker t takes indices t, t+T, t+2T, ...
/// Output bytes never depend on the thread count because every index writes
/// only its own files with its own forked rng.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max<std::size_t>(1, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr first_error;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<long long> parse_milestones(const std::string& csv) {
  std::vector<long long> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoll(item));
  return out;
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

// ---- schedule ----

struct ScheduleArgs {
  std::string mode = "cosine";
  double base_lr = 0.001;
  long long total = 1000;
  long long warmup = 0;
  std::string milestones;
  double factor = 0.1;
  long long every = 0;
  long long iters_per_epoch = 0;  // > 0: counts above are epochs
  std::string format = "csv";
  std::string out;
};

int run_schedule(const ScheduleArgs& a) {
  const long long unit = a.iters_per_epoch > 0 ? a.iters_per_epoch : 1;
  detkit::schedule::LrSchedule s;
  s.base_lr = a.base_lr;
  s.total_iters = a.total * unit;
  s.warmup_iters = a.warmup * unit;
  s.step_factor = a.factor;
  s.step_milestones = parse_milestones(a.milestones);
  for (long long& m : s.step_milestones) m *= unit;
  if (a.mode == "cosine")
    s.mode = detkit::schedule::LrMode::cosine;
  else if (a.mode == "step")
    s.mode = detkit::schedule::LrMode::step;
  else if (a.mode == "constant")
    s.mode = detkit::schedule::LrMode::constant;
  else
    throw std::invalid_argument("schedule: unknown mode " + a.mode);

  const long long every =
      a.every > 0 ? a.every * unit : std::max<long long>(1, s.total_iters / 100);
  const auto rows = detkit::schedule::emit_schedule_table(s, every);

  if (a.format == "csv") {
    std::ostringstream csv;
    csv << "iter,lr\n";
    for (const auto& [t, lr] : rows) csv << t << "," << detkit::io::format_double(lr) << "\n";
    if (a.out.empty())
      std::cout << csv.str();
    else
      detkit::io::write_file(a.out, csv.str());
    return 0;
  }
  if (a.format != "json") throw std::invalid_argument("schedule: format must be csv or json");
  json report = base_report("schedule");
  report["config"] = {{"mode", a.mode},           {"base_lr", a.base_lr},
                      {"total", s.total_iters},   {"warmup", s.warmup_iters},
                      {"factor", a.factor},       {"every", every},
                      {"milestones", s.step_milestones}};
  if (a.iters_per_epoch > 0) report["config"]["iters_per_epoch"] = a.iters_per_epoch;
  report["rows"] = json::array();
  for (const auto& [t, lr] : rows) report["rows"].push_back({t, lr});
  emit(report, a.out);
  return 0;
}

// ---- shapes ----

struct ShapesArgs {
  int stride = 32;
  int min_size = 320;
  int max_size = 608;
  std::size_t batches = 1;
  std::uint64_t seed = 0;
  std::string out;
};

int run_shapes(const ShapesArgs& a) {
  detkit::Rng rng(a.seed);
  const auto plan = detkit::schedule::plan_shapes(a.stride, a.min_size, a.max_size, a.batches, rng);
  json report = base_report("shapes");
  report["config"] = {{"stride", a.stride},
                      {"min_size", a.min_size},
                      {"max_size", a.max_size},
                      {"batches", a.batches},
                      {"seed", a.seed},
                      {"rng", std::string(detkit::Rng::kAlgorithm)}};
  report["candidates"] = detkit::schedule::shape_candidates(a.stride, a.min_size, a.max_size);
  report["sizes"] = plan.sizes;
  emit(report, a.out);
  return 0;
}

// ---- targets ----

struct TargetsArgs {
  int num_classes = 20;
  double epsilon = 0.1;
  int y = -1;
  std::string sigmoid;
  std::string negative_mode = "epsilon";
  std::string out;
};

int run_targets(const TargetsArgs& a) {
  json report = base_report("targets");
  report["config"] = {{"num_classes", a.num_classes},
                      {"epsilon", a.epsilon},
                      {"negative_mode", a.negative_mode}};
  if (a.y >= 0) {
    const auto q = detkit::targets::smooth_onehot(a.y, {a.epsilon, a.num_classes});
    report["config"]["y"] = a.y;
    report["smoothed"] = q.probs();
  } else if (!a.sigmoid.empty()) {
    std::vector<double> targets;
    std::stringstream ss(a.sigmoid);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) targets.push_back(std::stod(item));
    const auto mode = a.negative_mode == "epsilon_over_k_minus_1"
                          ? detkit::targets::NegativeMode::epsilon_over_k_minus_1
                          : detkit::targets::NegativeMode::epsilon;
    report["config"]["sigmoid_targets"] = targets;
    report["smoothed"] =
        detkit::targets::smooth_sigmoid_targets(targets, a.epsilon, mode, a.num_classes);
  } else {
    throw std::invalid_argument("targets: provide --y or --sigmoid");
  }
  emit(report, a.out);
  return 0;
}

// ---- syncbn-check ----

struct SyncbnArgs {
  std::string input;
  std::string out;
};

int run_syncbn(const SyncbnArgs& a) {
  std::vector<detkit::syncbn::DeviceShard> shards;
  std::vector<std::string> order;
  {
    std::ifstream in(a.input);
    if (!in) throw detkit::io::IoError("cannot open " + a.input);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw detkit::io::ParseError(a.input + ":" + std::to_string(line_no) +
                                     ": expected device_id,value");
      const std::string device = line.substr(0, comma);
      const std::string value_str = line.substr(comma + 1);
      double value;
      try {
        value = std::stod(value_str);
      } catch (const std::exception&) {
        if (line_no == 1) continue;  // header row
        throw detkit::io::ParseError(a.input + ":" + std::to_string(line_no) +
                                     ": non-numeric value '" + value_str + "'");
      }
      auto it = std::find_if(shards.begin(), shards.end(),
                             [&](const auto& s) { return s.device_id == device; });
      if (it == shards.end()) {
        shards.push_back({device, {}});
        it = std::prev(shards.end());
      }
      it->values.push_back(value);
    }
  }
  const auto report_data = detkit::syncbn::divergence_report(shards);

  json report = base_report("syncbn-check");
  report["sync"] = {{"count", report_data.sync.count},
                    {"mean", report_data.sync.mean},
                    {"variance", report_data.sync.variance}};
  report["devices"] = json::array();
  for (const auto& d : report_data.devices) {
    json dev = {{"device_id", d.device_id},
                {"count", d.count},
                {"local_mean", d.local_mean},
                {"local_variance", d.local_variance},
                {"mean_abs_gap", d.mean_abs_gap},
                {"var_abs_gap", d.var_abs_gap}};
    if (d.mean_rel_gap) dev["mean_rel_gap"] = *d.mean_rel_gap;
    if (d.var_rel_gap) dev["var_rel_gap"] = *d.var_rel_gap;
    report["devices"].push_back(std::move(dev));
  }
  report["max_abs_gap"] = report_data.max_abs_gap;
  report["max_gap_device"] = report_data.max_gap_device;
  report["max_gap_stat"] = report_data.max_gap_stat;
  emit(report, a.out);
  return 0;
}

// ---- mixup ----

struct MixupArgs {
  std::string a_path;
  std::string b_path;
  double alpha = 1.5;
  double beta = 1.5;
  double fixed_ratio = -1.0;
  double min_weight = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "voc";
  std::string pair_strategy = "shuffle";
  unsigned threads = 0;
  bool lossy = false;
  bool strict = false;
};

int run_mixup(const MixupArgs& a) {
  using detkit::io::DatasetFormat;
  const DatasetFormat format = a.format == "coco" ? DatasetFormat::coco : DatasetFormat::voc;
  if (a.format != "voc" && a.format != "coco")
    throw std::invalid_argument("mixup: format must be voc or coco");

  detkit::mixup::MixupConfig cfg;
  cfg.dist = {a.alpha, a.beta};
  if (a.fixed_ratio >= 0.0) cfg.fixed_ratio = a.fixed_ratio;
  cfg.min_weight = a.min_weight;
  if (!detkit::mixup::meets_detection_policy(cfg.dist))
    std::cerr << "warning: Beta(" << a.alpha << "," << a.beta
              << ") has a shape parameter below 1; detection mixup favors alpha,beta >= 1\n";

  const auto ds_a = detkit::io::load_dataset(a.a_path, {}, a.strict);
  const auto ds_b = detkit::io::load_dataset(a.b_path, {}, a.strict);
  if (ds_a.class_names != ds_b.class_names)
    throw std::domain_error("mixup: datasets use different class vocabularies");
  if (ds_a.entries.empty() || ds_b.entries.empty())
    throw std::domain_error("mixup: both datasets must be non-empty");

  detkit::Rng master(a.seed);
  std::vector<std::size_t> pairing(ds_a.entries.size());
  if (a.pair_strategy == "shuffle") {
    std::vector<std::size_t> perm(ds_b.entries.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    detkit::Rng shuffle_rng = master.fork(0x5u);
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[shuffle_rng.uniform_int(i)]);
    for (std::size_t i = 0; i < pairing.size(); ++i) pairing[i] = perm[i % perm.size()];
  } else if (a.pair_strategy == "index") {
    for (std::size_t i = 0; i < pairing.size(); ++i) pairing[i] = i % ds_b.entries.size();
  } else {
    throw std::invalid_argument("mixup: pair strategy must be shuffle or index");
  }

  const std::size_t n = ds_a.entries.size();
  std::vector<detkit::ImageBuffer> images(n, detkit::ImageBuffer(1, 1));
  detkit::io::DatasetIndex out_index;
  out_index.class_names = ds_a.class_names;
  out_index.source_format = a.format;
  out_index.entries.resize(n);
  std::vector<double> lambdas(n, 0.0);

  parallel_for(n, a.threads, [&](std::size_t i) {
    const auto& ea = ds_a.entries[i];
    const auto& eb = ds_b.entries[pairing[i]];
    detkit::Sample sa{detkit::io::load_image(ea.image_path), {}};
    detkit::Sample sb{detkit::io::load_image(eb.image_path), {}};
    for (const auto& o : ea.objects) sa.labels.push_back(o.label);
    for (const auto& o : eb.objects) sb.labels.push_back(o.label);
    detkit::Rng rng = master.fork(i);
    auto mixed = detkit::mixup::mix_samples(sa, sb, cfg, rng);
    lambdas[i] = mixed.lambda;
    detkit::io::DatasetEntry entry;
    entry.image_id = "mix_" + zero_pad(i, 6);
    entry.width = mixed.sample.image.width();
    entry.height = mixed.sample.image.height();
    for (const auto& l : mixed.sample.labels)
      entry.objects.push_back(detkit::io::DatasetObject{l, false});
    out_index.entries[i] = std::move(entry);
    images[i] = std::move(mixed.sample.image);
  });

  json extra = base_report("mixup");
  extra["config"] = {{"alpha", a.alpha},
                     {"beta", a.beta},
                     {"min_weight", a.min_weight},
                     {"pair_strategy", a.pair_strategy},
                     {"seed", a.seed},
                     {"rng", std::string(detkit::Rng::kAlgorithm)}};
  if (cfg.fixed_ratio) extra["config"]["fixed_ratio"] = *cfg.fixed_ratio;
  extra["lambdas"] = lambdas;
  detkit::io::write_dataset(out_index, images, a.out, format, extra, a.lossy);
  std::cerr << "mixup: wrote " << n << " samples to " << a.out << "\n";
  return 0;
}

// ---- augment ----

struct AugmentArgs {
  std::string input;
  std::string policy = "single";
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "voc";
  std::size_t preview = 0;
  unsigned threads = 0;
  bool lossy = false;
  bool strict = false;
};

detkit::augment::AugmentPolicy build_policy(const std::string& kind,
                                            const std::array<double, 3>& fill) {
  using namespace detkit::augment;
  if (kind == "multi") return AugmentPolicy::multi_stage_default();
  if (kind != "single") throw std::invalid_argument("augment: policy must be single or multi");
  ColorJitterConfig jitter;
  jitter.brightness_delta = 0.125;
  jitter.contrast_range = {0.5, 1.5};
  jitter.saturation_range = {0.5, 1.5};
  jitter.hue_delta = 18.0;
  CropStep crop;
  crop.iou_choices = {std::nullopt, 0.1, 0.3, 0.5, 0.7, 0.9};
  ExpandStep expand;
  expand.fill = fill;
  return AugmentPolicy(PipelineKind::single_stage,
                       {TransformStep{JitterStep{jitter}, 1.0}, TransformStep{expand, 0.5},
                        TransformStep{std::move(crop), 1.0},
                        TransformStep{ResizeStep{416, 416, Interp::random}, 1.0},
                        TransformStep{HflipStep{}, 0.5}});
}

int run_augment(const AugmentArgs& a) {
  using detkit::io::DatasetFormat;
  const DatasetFormat format = a.format == "coco" ? DatasetFormat::coco : DatasetFormat::voc;
  if (a.format != "voc" && a.format != "coco")
    throw std::invalid_argument("augment: format must be voc or coco");

  const auto ds = detkit::io::load_dataset(a.input, {}, a.strict);
  if (ds.entries.empty()) throw std::domain_error("augment: dataset is empty");
  const std::size_t n = ds.entries.size();

  // Expansion fill: per-channel dataset mean.
  std::array<double, 3> fill{0.5, 0.5, 0.5};
  {
    double sums[3] = {0, 0, 0};
    std::size_t count = 0;
    for (const auto& e : ds.entries) {
      const auto img = detkit::io::load_image(e.image_path);
      const auto& d = img.data();
      for (std::size_t i = 0; i < d.size(); i += 3) {
        sums[0] += d[i];
        sums[1] += d[i + 1];
        sums[2] += d[i + 2];
      }
      count += d.size() / 3;
    }
    for (int c = 0; c < 3; ++c) fill[c] = std::clamp(sums[c] / count, 0.0, 1.0);
  }
  const auto policy = build_policy(a.policy, fill);

  detkit::Rng master(a.seed);
  std::vector<detkit::ImageBuffer> images(n, detkit::ImageBuffer(1, 1));
  detkit::io::DatasetIndex out_index;
  out_index.class_names = ds.class_names;
  out_index.source_format = a.format;
  out_index.entries.resize(n);

  if (a.preview > 0) fs::create_directories(fs::path(a.out) / "preview");

  parallel_for(n, a.threads, [&](std::size_t i) {
    const auto& e = ds.entries[i];
    detkit::Sample s{detkit::io::load_image(e.image_path), {}};
    for (const auto& o : e.objects) s.labels.push_back(o.label);
    detkit::Rng rng = master.fork(i);
    const detkit::Sample out = detkit::augment::apply_policy(s, policy, rng);

    if (i < a.preview) {
      const fs::path dir = fs::path(a.out) / "preview";
      detkit::io::save_png(s.image, (dir / (e.image_id + "_before.png")).string());
      detkit::io::save_png(out.image, (dir / (e.image_id + "_after.png")).string());
    }

    detkit::io::DatasetEntry entry;
    entry.image_id = e.image_id;
    entry.width = out.image.width();
    entry.height = out.image.height();
    for (const auto& l : out.labels) entry.objects.push_back(detkit::io::DatasetObject{l, false});
    out_index.entries[i] = std::move(entry);
    images[i] = out.image;
  });

  json extra = base_report("augment");
  extra["config"] = {{"policy", a.policy},
                     {"seed", a.seed},
                     {"rng", std::string(detkit::Rng::kAlgorithm)},
                     {"expand_fill", fill}};
  detkit::io::write_dataset(out_index, images, a.out, format, extra, a.lossy);
  std::cerr << "augment: wrote " << n << " samples to " << a.out << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string gt;
  std::string dets;
  double iou = 0.5;
  std::string mode = "11point";
  bool with_coco_map = false;
  bool strict = false;
  std::string out;  // directory for summary.json + per_class.csv
};

int run_eval_map(const EvalArgs& a) {
  detkit::eval::EvalConfig cfg;
  cfg.iou_threshold = a.iou;
  if (a.mode == "11point")
    cfg.ap_mode = detkit::eval::ApMode::voc07_11point;
  else if (a.mode == "area")
    cfg.ap_mode = detkit::eval::ApMode::voc_all_points;
  else
    throw std::invalid_argument("eval map: mode must be 11point or area");

  const auto index = detkit::io::load_dataset(a.gt, {}, a.strict);
  const auto gts = detkit::io::to_ground_truth(index);
  cfg.num_classes = static_cast<int>(index.class_names.size());
  const auto dets = detkit::io::read_detections_jsonl(a.dets);
  const auto result = detkit::eval::mean_ap(dets, gts, cfg);

  json report = base_report("eval map");
  report["config"] = {{"iou_threshold", a.iou},
                      {"ap_mode", detkit::eval::to_string(cfg.ap_mode)},
                      {"num_classes", cfg.num_classes}};
  report["map"] = result.map;
  report["per_class"] = json::array();
  for (const auto& c : result.per_class)
    report["per_class"].push_back({{"class_id", c.class_id},
                                   {"name", index.class_names[c.class_id]},
                                   {"num_gt", c.num_gt},
                                   {"num_dets", c.num_dets},
                                   {"ap", c.ap}});
  if (a.with_coco_map) report["coco_map"] = detkit::eval::coco_map(dets, gts, cfg);

  if (a.out.empty()) {
    if (stdout_is_tty()) {
      std::printf("%-10s %-16s %8s %8s %10s\n", "class_id", "name", "num_gt", "num_dets", "ap");
      for (const auto& c : result.per_class)
        std::printf("%-10d %-16s %8zu %8zu %10.4f\n", c.class_id,
                    index.class_names[c.class_id].c_str(), c.num_gt, c.num_dets, c.ap);
      std::printf("mAP@%.2f (%s): %.4f\n", a.iou, a.mode.c_str(), result.map);
      if (a.with_coco_map)
        std::printf("mAP@[.5:.95]: %.4f\n", report["coco_map"].get<double>());
    } else {
      emit(report, "");
    }
    return 0;
  }
  fs::create_directories(a.out);
  emit(report, (fs::path(a.out) / "summary.json").string());
  std::ostringstream csv;
  csv << "class_id,name,num_gt,num_dets,ap\n";
  for (const auto& c : result.per_class)
    csv << c.class_id << "," << index.class_names[c.class_id] << "," << c.num_gt << ","
        << c.num_dets << "," << detkit::io::format_double(c.ap) << "\n";
  detkit::io::write_file((fs::path(a.out) / "per_class.csv").string(), csv.str());
  return 0;
}

struct EvalDeltaArgs {
  std::string a_path;  // summary.json from `eval map --out`
  std::string b_path;
  std::string format = "json";
  std::string out;
};

int run_eval_delta(const EvalDeltaArgs& a) {
  const auto load_table = [](const std::string& path) {
    const json doc = json::parse(detkit::io::read_file(path));
    std::vector<detkit::eval::ClassAp> table;
    std::map<int, std::string> names;
    for (const auto& c : doc.at("per_class")) {
      detkit::eval::ClassAp entry;
      entry.class_id = c.at("class_id").get<int>();
      entry.ap = c.at("ap").get<double>();
      entry.num_gt = c.value("num_gt", 0);
      entry.num_dets = c.value("num_dets", 0);
      names[entry.class_id] = c.value("name", std::to_string(entry.class_id));
      table.push_back(entry);
    }
    return std::pair(table, names);
  };
  const auto [table_a, names] = load_table(a.a_path);
  const auto [table_b, names_b] = load_table(a.b_path);
  const auto deltas = detkit::eval::per_class_delta(table_a, table_b);

  if (a.format == "csv") {
    std::ostringstream csv;
    csv << "class_id,name,ap_a,ap_b,delta\n";
    for (const auto& d : deltas)
      csv << d.class_id << "," << names.at(d.class_id) << "," << detkit::io::format_double(d.ap_a)
          << "," << detkit::io::format_double(d.ap_b) << "," << detkit::io::format_double(d.delta)
          << "\n";
    if (a.out.empty())
      std::cout << csv.str();
    else
      detkit::io::write_file(a.out, csv.str());
    return 0;
  }
  if (a.format != "json") throw std::invalid_argument("eval delta: format must be json or csv");
  json report = base_report("eval delta");
  report["deltas"] = json::array();
  for (const auto& d : deltas)
    report["deltas"].push_back({{"class_id", d.class_id},
                                {"name", names.at(d.class_id)},
                                {"ap_a", d.ap_a},
                                {"ap_b", d.ap_b},
                                {"delta", d.delta}});
  emit(report, a.out);
  return 0;
}

// ---- elephant ----

struct ElephantGenArgs {
  std::string scene;
  std::string patch;
  std::string mask;
  int stride = 0;
  int stride_x = 0;
  int stride_y = 0;
  double scale = 1.0;
  int class_id = 0;
  std::string out;
};

int run_elephant_gen(const ElephantGenArgs& a) {
  const detkit::ImageBuffer scene = detkit::io::load_image(a.scene);
  detkit::elephant::PatchSpec spec{detkit::io::load_image(a.patch), std::nullopt, 0, 0, a.scale};
  if (!a.mask.empty()) {
    const detkit::ImageBuffer m = detkit::io::load_image(a.mask);
    if (!m.same_shape(spec.patch))
      throw std::domain_error("elephant gen: mask dimensions differ from patch");
    std::vector<double> alpha(static_cast<std::size_t>(m.height()) * m.width());
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x)
        alpha[static_cast<std::size_t>(y) * m.width() + x] = m.at(y, x, 0);
    spec.alpha_mask = std::move(alpha);
  }
  // Effective strides: explicit flags win, else half the scaled patch side.
  const int pw = std::max(1, static_cast<int>(std::lround(a.scale * spec.patch.width())));
  const int ph = std::max(1, static_cast<int>(std::lround(a.scale * spec.patch.height())));
  spec.stride_x = a.stride_x > 0 ? a.stride_x : (a.stride > 0 ? a.stride : std::max(1, pw / 2));
  spec.stride_y = a.stride_y > 0 ? a.stride_y : (a.stride > 0 ? a.stride : std::max(1, ph / 2));

  fs::create_directories(a.out);
  json manifest = base_report("elephant gen");
  manifest["config"] = {{"stride_x", spec.stride_x},
                        {"stride_y", spec.stride_y},
                        {"scale", a.scale},
                        {"patch_class_id", a.class_id}};
  manifest["frames"] = json::array();
  detkit::elephant::for_each_frame(
      scene, spec, a.class_id, [&](detkit::elephant::AdversarialFrame&& f) {
        const std::string file = "frame_" + zero_pad(static_cast<std::size_t>(f.frame_id), 6) + ".png";
        const std::string path = (fs::path(a.out) / file).string();
        detkit::io::save_png(f.image, path);
        manifest["frames"].push_back(
            {{"frame_id", f.frame_id},
             {"file", file},
             {"sha256", detkit::io::sha256_hex_file(path)},
             {"patch_bbox", {f.patch_bbox.xmin, f.patch_bbox.ymin, f.patch_bbox.xmax,
                             f.patch_bbox.ymax}}});
      });
  detkit::io::write_file((fs::path(a.out) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cerr << "elephant gen: wrote " << manifest["frames"].size() << " frames to " << a.out
            << "\n";
  return 0;
}

struct ElephantEvalArgs {
  std::string manifest;
  std::string dets;
  std::string clean;
  double iou = 0.5;
  double exclude_occluded = -1.0;
  int class_id = -1;
  std::string out;
};

int run_elephant_eval(const ElephantEvalArgs& a) {
  const json manifest = json::parse(detkit::io::read_file(a.manifest));
  std::vector<detkit::elephant::FrameGroundTruth> frames;
  for (const auto& f : manifest.at("frames")) {
    const auto& b = f.at("patch_bbox");
    frames.push_back(detkit::elephant::FrameGroundTruth{
        f.at("frame_id").get<int>(),
        detkit::BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                     b[3].get<double>()}});
  }
  const int patch_class =
      a.class_id >= 0 ? a.class_id : manifest.at("config").at("patch_class_id").get<int>();

  detkit::elephant::DetectionsByFrame by_frame;
  for (auto& d : detkit::io::read_detections_jsonl(a.dets)) {
    int frame_id;
    try {
      frame_id = std::stoi(d.image_id);
    } catch (const std::exception&) {
      throw detkit::io::ParseError("elephant eval: detection image_id '" + d.image_id +
                                   "' is not a frame index");
    }
    by_frame[frame_id].push_back(std::move(d));
  }

  std::vector<detkit::elephant::SceneObject> clean;
  for (const auto& j : detkit::io::read_json_or_jsonl(a.clean)) {
    const auto& b = j.at("bbox");
    clean.push_back(detkit::elephant::SceneObject{
        detkit::BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                     b[3].get<double>()},
        j.at("class_id").get<int>()});
  }

  detkit::eval::EvalConfig cfg;
  cfg.iou_threshold = a.iou;
  const std::optional<double> exclude =
      a.exclude_occluded >= 0.0 ? std::optional<double>(a.exclude_occluded) : std::nullopt;

  const double recall = detkit::elephant::patch_recall(frames, patch_class, by_frame, cfg);
  const double disappeared =
      detkit::elephant::disappearance_rate(clean, frames, by_frame, cfg, exclude);

  json report = base_report("elephant eval");
  report["config"] = {{"iou_threshold", a.iou}, {"patch_class_id", patch_class}};
  if (exclude) report["config"]["exclude_occluded_iou"] = *exclude;
  report["num_frames"] = frames.size();
  report["num_clean_objects"] = clean.size();
  report["clean_source"] = "file";
  report["recall_of_elephant"] = recall;
  report["recall_of_elephant_formatted"] = format_fixed2(recall);
  report["disappeared_objects_pct"] = disappeared;
  report["disappeared_objects_pct_formatted"] = format_fixed2(disappeared);
  if (a.out.empty() && stdout_is_tty()) {
    std::printf("frames: %zu, clean objects: %zu\n", frames.size(), clean.size());
    std::printf("recall of patch:      %s%%\n", format_fixed2(recall).c_str());
    std::printf("disappeared objects:  %s%%\n", format_fixed2(disappeared).c_str());
    return 0;
  }
  emit(report, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detkit: training-time detection freebies and their evaluation harness"};
  app.set_config("--config")->envname("DETKIT_CONFIG");
  app.set_version_flag("--version", std::string("detkit ") + detkit::version_string());
  app.require_subcommand(1);

  ScheduleArgs schedule_args;
  auto* schedule_cmd = app.add_subcommand("schedule", "Emit a learning-rate schedule table");
  schedule_cmd->add_option("--mode", schedule_args.mode, "cosine, step or constant")
      ->default_val("cosine");
  schedule_cmd->add_option("--base-lr", schedule_args.base_lr, "Base learning rate")->required();
  schedule_cmd->add_option("--total", schedule_args.total, "Total iterations T")->required();
  schedule_cmd->add_option("--warmup", schedule_args.warmup, "Linear warmup iterations W");
  schedule_cmd->add_option("--milestones", schedule_args.milestones,
                           "Step mode milestones, comma separated");
  schedule_cmd->add_option("--factor", schedule_args.factor, "Step mode decay factor");
  schedule_cmd->add_option("--every", schedule_args.every, "Row spacing (default T/100)");
  schedule_cmd->add_option("--iters-per-epoch", schedule_args.iters_per_epoch,
                           "Interpret --total/--warmup/--milestones/--every as epochs scaled by this");
  schedule_cmd->add_option("--format", schedule_args.format, "csv or json")->default_val("csv");
  schedule_cmd->add_option("--out", schedule_args.out, "Output file (default stdout)");

  ShapesArgs shapes_args;
  auto* shapes_cmd = app.add_subcommand("shapes", "Plan random square training shapes");
  shapes_cmd->add_option("--stride", shapes_args.stride, "Network stride")->default_val(32);
  shapes_cmd->add_option("--min", shapes_args.min_size, "Minimum size")->default_val(320);
  shapes_cmd->add_option("--max", shapes_args.max_size, "Maximum size")->default_val(608);
  shapes_cmd->add_option("--batches", shapes_args.batches, "Number of batches")->required();
  shapes_cmd->add_option("--seed", shapes_args.seed, "RNG seed");
  shapes_cmd->add_option("--out", shapes_args.out, "Output file (default stdout)");

  TargetsArgs targets_args;
  auto* targets_cmd = app.add_subcommand("targets", "Print smoothed classification targets");
  targets_cmd->add_option("--classes", targets_args.num_classes, "Class count K")->default_val(20);
  targets_cmd->add_option("--epsilon", targets_args.epsilon, "Smoothing epsilon")->default_val(0.1);
  targets_cmd->add_option("--y", targets_args.y, "True class index (softmax head)");
  targets_cmd->add_option("--sigmoid", targets_args.sigmoid,
                          "Comma-separated 0/1 targets (sigmoid head)");
  targets_cmd->add_option("--negative-mode", targets_args.negative_mode,
                          "epsilon or epsilon_over_k_minus_1");
  targets_cmd->add_option("--out", targets_args.out, "Output file (default stdout)");

  SyncbnArgs syncbn_args;
  auto* syncbn_cmd = app.add_subcommand("syncbn-check", "Per-device vs whole-batch BN statistics");
  syncbn_cmd->add_option("--input", syncbn_args.input, "CSV of device_id,value rows")->required();
  syncbn_cmd->add_option("--out", syncbn_args.out, "Output file (default stdout)");

  MixupArgs mixup_args;
  auto* mixup_cmd = app.add_subcommand("mixup", "Mix two datasets into a new dataset");
  mixup_cmd->add_option("--a", mixup_args.a_path, "First dataset (VOC dir or COCO json)")
      ->required();
  mixup_cmd->add_option("--b", mixup_args.b_path, "Second dataset")->required();
  mixup_cmd->add_option("--alpha", mixup_args.alpha, "Beta alpha")->default_val(1.5);
  mixup_cmd->add_option("--beta", mixup_args.beta, "Beta beta")->default_val(1.5);
  mixup_cmd->add_option("--fixed-ratio", mixup_args.fixed_ratio,
                        "Fixed lambda in [0,1], overrides sampling");
  mixup_cmd->add_option("--min-weight", mixup_args.min_weight,
                        "Drop labels with weight strictly below this");
  mixup_cmd->add_option("--seed", mixup_args.seed, "RNG seed");
  mixup_cmd->add_option("--out", mixup_args.out, "Output directory")->required();
  mixup_cmd->add_option("--format", mixup_args.format, "voc or coco")->default_val("voc");
  mixup_cmd->add_option("--pair-strategy", mixup_args.pair_strategy, "shuffle or index");
  mixup_cmd->add_option("--threads", mixup_args.threads, "Worker threads (0 = auto)");
  mixup_cmd->add_flag("--lossy", mixup_args.lossy, "Write JPEG instead of lossless PNG");
  mixup_cmd->add_flag("--strict", mixup_args.strict, "Reject rather than skip degenerate records");

  AugmentArgs augment_args;
  auto* augment_cmd = app.add_subcommand("augment", "Apply an augmentation policy to a dataset");
  augment_cmd->add_option("--input", augment_args.input, "Dataset (VOC dir or COCO json)")
      ->required();
  augment_cmd->add_option("--policy", augment_args.policy, "single or multi")->default_val("single");
  augment_cmd->add_option("--seed", augment_args.seed, "RNG seed");
  augment_cmd->add_option("--out", augment_args.out, "Output directory")->required();
  augment_cmd->add_option("--format", augment_args.format, "voc or coco")->default_val("voc");
  augment_cmd->add_option("--preview", augment_args.preview,
                          "Dump this many before/after image pairs");
  augment_cmd->add_option("--threads", augment_args.threads, "Worker threads (0 = auto)");
  augment_cmd->add_flag("--lossy", augment_args.lossy, "Write JPEG instead of lossless PNG");
  augment_cmd->add_flag("--strict", augment_args.strict,
                        "Reject rather than skip degenerate records");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Detection evaluation");
  eval_cmd->require_subcommand(1);
  auto* eval_map_cmd = eval_cmd->add_subcommand("map", "VOC-style mean average precision");
  eval_map_cmd->add_option("--gt", eval_args.gt, "Ground truth (VOC dir or COCO json)")->required();
  eval_map_cmd->add_option("--dets", eval_args.dets, "Detections JSONL")->required();
  eval_map_cmd->add_option("--iou", eval_args.iou, "IoU threshold")->default_val(0.5);
  eval_map_cmd->add_option("--mode", eval_args.mode, "11point or area")->default_val("11point");
  eval_map_cmd->add_flag("--coco-map", eval_args.with_coco_map,
                         "Also report mAP averaged over IoU 0.50:0.05:0.95");
  eval_map_cmd->add_flag("--strict", eval_args.strict,
                         "Reject rather than skip degenerate records");
  eval_map_cmd->add_option("--out", eval_args.out,
                           "Output directory for summary.json + per_class.csv (default stdout)");

  EvalDeltaArgs eval_delta_args;
  auto* eval_delta_cmd =
      eval_cmd->add_subcommand("delta", "Per-class AP differences between two eval runs");
  eval_delta_cmd->add_option("--a", eval_delta_args.a_path, "Baseline summary.json")->required();
  eval_delta_cmd->add_option("--b", eval_delta_args.b_path, "Comparison summary.json")->required();
  eval_delta_cmd->add_option("--format", eval_delta_args.format, "json or csv")
      ->default_val("json");
  eval_delta_cmd->add_option("--out", eval_delta_args.out, "Output file (default stdout)");

  ElephantGenArgs egen_args;
  ElephantEvalArgs eeval_args;
  auto* elephant_cmd = app.add_subcommand("elephant", "Sliding-patch robustness harness");
  elephant_cmd->require_subcommand(1);
  auto* egen_cmd = elephant_cmd->add_subcommand("gen", "Generate sliding-patch frames");
  egen_cmd->add_option("--scene", egen_args.scene, "Scene image")->required();
  egen_cmd->add_option("--patch", egen_args.patch, "Patch image")->required();
  egen_cmd->add_option("--mask", egen_args.mask, "Optional alpha mask image");
  egen_cmd->add_option("--stride", egen_args.stride, "Grid stride in both axes");
  egen_cmd->add_option("--stride-x", egen_args.stride_x, "Horizontal stride");
  egen_cmd->add_option("--stride-y", egen_args.stride_y, "Vertical stride");
  egen_cmd->add_option("--scale", egen_args.scale, "Patch scale factor")->default_val(1.0);
  egen_cmd->add_option("--class-id", egen_args.class_id, "Ground-truth class id of the patch")
      ->required();
  egen_cmd->add_option("--out", egen_args.out, "Output directory")->required();
  auto* eeval_cmd = elephant_cmd->add_subcommand("eval", "Score detections on generated frames");
  eeval_cmd->add_option("--manifest", eeval_args.manifest, "manifest.json from elephant gen")
      ->required();
  eeval_cmd->add_option("--dets", eeval_args.dets, "Detections JSONL (image_id = frame_id)")
      ->required();
  eeval_cmd->add_option("--clean", eeval_args.clean,
                        "Clean-scene objects (JSON array or JSONL of {class_id, bbox})")
      ->required();
  eeval_cmd->add_option("--iou", eeval_args.iou, "IoU threshold")->default_val(0.5);
  eeval_cmd->add_option("--exclude-occluded", eeval_args.exclude_occluded,
                        "Exclude objects overlapping the patch at this IoU or more");
  eeval_cmd->add_option("--class-id", eeval_args.class_id,
                        "Override the manifest's patch class id");
  eeval_cmd->add_option("--out", eeval_args.out, "Output file (default stdout)");

  auto* version_cmd = app.add_subcommand("version", "Print the toolkit version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (schedule_cmd->parsed()) return run_schedule(schedule_args);
    if (shapes_cmd->parsed()) return run_shapes(shapes_args);
    if (targets_cmd->parsed()) return run_targets(targets_args);
    if (syncbn_cmd->parsed()) return run_syncbn(syncbn_args);
    if (mixup_cmd->parsed()) return run_mixup(mixup_args);
    if (augment_cmd->parsed()) return run_augment(augment_args);
    if (eval_cmd->parsed() && eval_map_cmd->parsed()) return run_eval_map(eval_args);
    if (eval_cmd->parsed() && eval_delta_cmd->parsed()) return run_eval_delta(eval_delta_args);
    if (elephant_cmd->parsed() && egen_cmd->parsed()) return run_elephant_gen(egen_args);
    if (elephant_cmd->parsed() && eeval_cmd->parsed()) return run_elephant_eval(eeval_args);
    if (version_cmd->parsed()) {
      std::cout << "detkit " << detkit::version_string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
