#pragma once

// Subcommand implementations behind tools/railguard. Each returns a process
// exit status and writes only to the streams/files it is given.
//
// Exit codes: 0 success (alerts are data, not failures), 2 usage or path
// error, 3 parse/schema error, 4 calibration error, 5 empty ground truth.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "railguard/calibration.hpp"
#include "railguard/ingest.hpp"
#include "railguard/log.hpp"
#include "railguard/metrics.hpp"
#include "railguard/pipeline.hpp"
#include "railguard/report.hpp"
#include "railguard/serve.hpp"
#include "railguard/simgen.hpp"
#include "railguard/webhook.hpp"

namespace railguard::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kParse = 3,
  kCalibration = 4,
  kEmptyGroundTruth = 5,
};

namespace fs = std::filesystem;

struct AnalyzeOptions {
  std::string detections = "-";
  std::optional<std::string> calibration;
  PipelineConfig config;
  bool emit_status = false;
  bool emit_overlay = false;
  std::optional<std::string> out_dir;
};

struct EvaluateOptions {
  std::string predictions;
  std::string ground_truth;
  EvaluationConfig config;
  std::optional<std::string> out_dir;
};

struct SimulateOptions {
  std::string scenario;
  std::vector<double> thresholds{1.0};
  std::optional<std::string> out_dir;
};

struct ReportOptions {
  std::string rows;
  TableKind kind = TableKind::track_detection;
  std::optional<std::string> out_dir;
};

struct ServeOptions {
  std::string listen = "127.0.0.1:8765";
  std::optional<std::string> webhook;
  std::optional<std::string> calibration;
  PipelineConfig config;
  bool emit_status = false;
  RetryPolicy retry;
};

namespace detail {

inline bool readable(const std::string& path) { return path == "-" || fs::is_regular_file(path); }

inline bool prepare_out_dir(const std::optional<std::string>& dir, std::ostream& err) {
  if (!dir) return true;
  std::error_code ec;
  fs::create_directories(*dir, ec);
  if (ec || !fs::is_directory(*dir)) {
    err << "railguard: cannot create output directory " << *dir << "\n";
    return false;
  }
  return true;
}

inline bool write_file(const fs::path& p, const std::string& content, std::ostream& err) {
  std::ofstream f(p, std::ios::binary);
  f << content;
  if (!f) {
    err << "railguard: cannot write " << p.string() << "\n";
    return false;
  }
  return true;
}

/// Loads the calibration file or falls back to 1 m per pixel with a warning.
inline std::optional<Calibration> load_calibration_or_default(const std::optional<std::string>& path,
                                                              std::ostream& err) {
  if (!path) {
    err << "railguard: warning: no calibration given; pixel distances are treated as meters "
           "(meters_per_pixel = 1.0)\n";
    return Calibration{};
  }
  try {
    return load_calibration(*path);
  } catch (const CalibrationError& e) {
    err << "railguard: calibration error: " << e.what() << "\n";
    return std::nullopt;
  }
}

template <typename Fn>
int with_input(const std::string& path, std::istream& stdin_stream, Fn&& fn) {
  if (path == "-") return fn(stdin_stream);
  std::ifstream in(path, std::ios::binary);
  return fn(in);
}

}  // namespace detail

inline std::string alert_line(const AlertEvent& e) { return to_json(e).dump() + "\n"; }
inline std::string status_line(const ProximityStatus& s) { return to_json(s).dump() + "\n"; }

inline int run_analyze(const AnalyzeOptions& opt, std::istream& in, std::ostream& out, std::ostream& err) {
  if (!detail::readable(opt.detections)) {
    err << "railguard: usage: detections file not found: " << opt.detections << "\n";
    return kUsage;
  }
  if (opt.calibration && !fs::is_regular_file(*opt.calibration)) {
    err << "railguard: usage: calibration file not found: " << *opt.calibration << "\n";
    return kUsage;
  }
  try {
    opt.config.validate();
  } catch (const std::invalid_argument& e) {
    err << "railguard: usage: " << e.what() << "\n";
    return kUsage;
  }
  if (!detail::prepare_out_dir(opt.out_dir, err)) return kUsage;
  const auto cal = detail::load_calibration_or_default(opt.calibration, err);
  if (!cal) return kCalibration;

  std::ofstream alerts_file, status_file, overlay_file;
  std::ostream* alerts = &out;
  std::ostream* statuses = opt.emit_status ? &out : nullptr;
  std::ostream* overlay = nullptr;
  if (opt.out_dir) {
    const fs::path dir(*opt.out_dir);
    alerts_file.open(dir / "alerts.jsonl", std::ios::binary);
    alerts = &alerts_file;
    if (opt.emit_status) {
      status_file.open(dir / "status.jsonl", std::ios::binary);
      statuses = &status_file;
    }
    if (opt.emit_overlay) {
      overlay_file.open(dir / "overlay.jsonl", std::ios::binary);
      overlay = &overlay_file;
    }
  }

  return detail::with_input(opt.detections, in, [&](std::istream& src) {
    try {
      StreamReader reader(src);
      StreamProcessor proc(*cal, opt.config);
      while (auto frame = reader.next()) {
        const auto r = proc.process(*frame);
        if (statuses) {
          for (const auto& s : r.statuses) *statuses << status_line(s);
        }
        for (const auto& e : r.events) *alerts << alert_line(e);
        if (overlay) *overlay << overlay_json(*frame, r).dump() << "\n";
      }
      alerts->flush();
      const auto summary = to_json(proc.summary());
      log::info("run summary: " + summary.dump());
      if (proc.summary().frames_without_track > 0) {
        log::warn(std::to_string(proc.summary().frames_without_track) +
                  " frames had no track detection; their objects have unknown distance");
      }
      if (opt.out_dir && !detail::write_file(fs::path(*opt.out_dir) / "summary.json", summary.dump(2) + "\n", err)) {
        return int{kUsage};
      }
      return int{kOk};
    } catch (const IngestError& e) {
      err << "railguard: " << opt.detections << ": " << e.what() << "\n";
      return int{kParse};
    }
  });
}

inline int run_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream& err) {
  for (const auto* p : {&opt.predictions, &opt.ground_truth}) {
    if (!fs::is_regular_file(*p)) {
      err << "railguard: usage: file not found: " << *p << "\n";
      return kUsage;
    }
  }
  if (!(opt.config.iou_threshold >= 0.0 && opt.config.iou_threshold <= 1.0)) {
    err << "railguard: usage: --iou must be in [0,1]\n";
    return kUsage;
  }
  if (!detail::prepare_out_dir(opt.out_dir, err)) return kUsage;

  ParsedStream preds, gt;
  try {
    std::ifstream pin(opt.predictions, std::ios::binary);
    preds = parse_stream(pin);
  } catch (const IngestError& e) {
    err << "railguard: " << opt.predictions << ": " << e.what() << "\n";
    return kParse;
  }
  try {
    std::ifstream gin(opt.ground_truth, std::ios::binary);
    gt = parse_stream(gin);
  } catch (const IngestError& e) {
    err << "railguard: " << opt.ground_truth << ": " << e.what() << "\n";
    return kParse;
  }

  std::vector<GroundTruthFrame> gt_frames;
  for (const auto& f : gt.frames) gt_frames.push_back({f.frame_index, ground_truth_boxes(f)});
  const auto set = evaluate_frames(preds.frames, gt_frames, opt.config);
  const auto doc = metrics_document(set, opt.config);

  if (opt.out_dir) {
    const fs::path dir(*opt.out_dir);
    if (!detail::write_file(dir / "metrics.json", doc.dump(2) + "\n", err) ||
        !detail::write_file(dir / "pr_curve.csv", curve_csv(operating_points(set), true), err) ||
        !detail::write_file(dir / "f1_curve.csv", curve_csv(f1_confidence_curve(set), false), err)) {
      return kUsage;
    }
  } else {
    out << doc.dump() << "\n";
  }

  if (set.ground_truth_count() == 0) {
    err << "railguard: warning: ground truth has no " << to_string(opt.config.class_filter)
        << " boxes; AP reported as 0\n";
    return kEmptyGroundTruth;
  }
  return kOk;
}

inline int run_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  if (!fs::is_regular_file(opt.scenario)) {
    err << "railguard: usage: scenario file not found: " << opt.scenario << "\n";
    return kUsage;
  }
  if (!detail::prepare_out_dir(opt.out_dir, err)) return kUsage;
  Scenario scenario;
  try {
    std::ifstream in(opt.scenario, std::ios::binary);
    scenario = scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    err << "railguard: " << opt.scenario << ": " << e.what() << "\n";
    return kParse;
  } catch (const CalibrationError& e) {
    err << "railguard: " << opt.scenario << ": calibration: " << e.what() << "\n";
    return kCalibration;
  } catch (const ScenarioError& e) {
    err << "railguard: " << opt.scenario << ": " << e.what() << "\n";
    return kParse;
  }

  GeneratedScenario g;
  try {
    g = generate(scenario);
  } catch (const HorizonError& e) {
    err << "railguard: scenario projects beyond the horizon: " << e.what() << "\n";
    return kCalibration;
  }
  if (g.truth.clipped_boxes > 0) {
    log::warn(std::to_string(g.truth.clipped_boxes) + " projected boxes were clipped to the frame");
  }
  if (!opt.out_dir) {
    write_stream(out, g.header, g.frames);
    return kOk;
  }
  const fs::path dir(*opt.out_dir);
  std::vector<FrameRecord> truth = g.truth.frames;
  nlohmann::ordered_json clipped = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < g.truth.per_actor.size(); ++a) {
    for (std::size_t k = 0; k < g.truth.per_actor[a].size(); ++k) {
      if (g.truth.per_actor[a][k].clipped) clipped.push_back({{"actor", a}, {"frame_index", k}});
    }
  }
  auto breaches = breach_interval_document(scenario, opt.thresholds);
  breaches["clipped"] = clipped;
  if (!detail::write_file(dir / "stream.jsonl", write_stream(g.header, g.frames), err) ||
      !detail::write_file(dir / "ground_truth.jsonl", write_stream(g.header, truth), err) ||
      !detail::write_file(dir / "breaches.json", breaches.dump(2) + "\n", err)) {
    return kUsage;
  }
  return kOk;
}

inline int run_report(const ReportOptions& opt, std::ostream& out, std::ostream& err) {
  if (!fs::is_regular_file(opt.rows)) {
    err << "railguard: usage: rows file not found: " << opt.rows << "\n";
    return kUsage;
  }
  if (!detail::prepare_out_dir(opt.out_dir, err)) return kUsage;
  try {
    std::ifstream in(opt.rows, std::ios::binary);
    const auto rows = read_method_rows(in);
    const auto text = render_comparison_table(rows, opt.kind);
    if (opt.out_dir) {
      const fs::path dir(*opt.out_dir);
      const std::string stem = opt.kind == TableKind::track_detection ? "track_detection" : "object_detection";
      if (!detail::write_file(dir / (stem + ".txt"), text, err) ||
          !detail::write_file(dir / (stem + ".csv"), render_comparison_csv(rows, opt.kind), err)) {
        return kUsage;
      }
    } else {
      out << text;
    }
    return kOk;
  } catch (const ReportParseError& e) {
    err << "railguard: " << opt.rows << ": " << e.what() << "\n";
    return kParse;
  } catch (const RangeError& e) {
    err << "railguard: " << opt.rows << ": " << e.what() << "\n";
    return kParse;
  } catch (const std::invalid_argument& e) {
    err << "railguard: " << opt.rows << ": " << e.what() << "\n";
    return kParse;
  }
}

/// "host:port" or "[v6]:port".
inline std::optional<std::pair<std::string, std::uint16_t>> parse_listen(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  std::string host = s.substr(0, colon);
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  try {
    std::size_t used = 0;
    const unsigned long port = std::stoul(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1 || port > 65535) return std::nullopt;
    return std::make_pair(host, static_cast<std::uint16_t>(port));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Runs the ingestion service until `wait_for_shutdown` returns, then drains
/// open sessions and pending webhook deliveries.
inline int run_serve(const ServeOptions& opt, std::ostream& out, std::ostream& err,
                     const std::function<void(std::uint16_t port)>& wait_for_shutdown) {
  const auto addr = parse_listen(opt.listen);
  if (!addr) {
    err << "railguard: usage: --listen expects HOST:PORT, got " << opt.listen << "\n";
    return kUsage;
  }
  try {
    opt.config.validate();
  } catch (const std::invalid_argument& e) {
    err << "railguard: usage: " << e.what() << "\n";
    return kUsage;
  }
  if (opt.calibration && !fs::is_regular_file(*opt.calibration)) {
    err << "railguard: usage: calibration file not found: " << *opt.calibration << "\n";
    return kUsage;
  }
  const auto cal = detail::load_calibration_or_default(opt.calibration, err);
  if (!cal) return kCalibration;

  std::unique_ptr<WebhookSink> webhook;
  if (opt.webhook) {
    try {
      webhook = std::make_unique<WebhookSink>(*opt.webhook, opt.retry, 1024,
                                              [](const std::string& m) { log::warn(m); });
    } catch (const std::invalid_argument& e) {
      err << "railguard: usage: " << e.what() << "\n";
      return kUsage;
    }
  }

  std::mutex out_mu;
  OutputSink sink;
  sink.alert = [&](const std::string& source_id, const AlertEvent& e) {
    {
      std::lock_guard lock(out_mu);
      out << alert_line(e) << std::flush;
    }
    if (webhook) webhook->enqueue(source_id, e);
  };
  sink.status = [&](const ProximityStatus& s) {
    std::lock_guard lock(out_mu);
    out << status_line(s) << std::flush;
  };

  ServerOptions so;
  so.host = addr->first;
  so.port = addr->second;
  so.calibration = *cal;
  so.config = opt.config;
  so.emit_status = opt.emit_status;
  Server server(so, sink);
  std::uint16_t port = 0;
  try {
    port = server.start();
  } catch (const std::runtime_error& e) {
    err << "railguard: usage: " << e.what() << "\n";
    return kUsage;
  }
  err << "railguard: listening on " << so.host << ":" << port << std::endl;
  wait_for_shutdown(port);
  server.stop();
  if (webhook) {
    webhook->close();
    const auto st = webhook->stats();
    log::info("webhook: " + std::to_string(st.delivered) + " delivered, " + std::to_string(st.abandoned) +
              " abandoned, " + std::to_string(st.attempts) + " attempts");
  }
  const auto t = server.totals();
  log::info("served " + std::to_string(t.sessions) + " sessions, " + std::to_string(t.frames_in) +
            " frames in, " + std::to_string(t.frames_processed) + " processed");
  return kOk;
}

}  // namespace railguard::cli
