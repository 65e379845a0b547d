// railguard: command-line frontend.
//
//   railguard analyze  --detections PATH|- [--calibration PATH] [--out DIR] ...
//   railguard evaluate --detections PRED --gt GT [--iou 0.5] [--class person] [--out DIR]
//   railguard simulate --scenario FILE [--out DIR] [--threshold-m 1.0 ...]
//   railguard report   --rows CSV --kind track|object [--out DIR]
//   railguard serve    --listen HOST:PORT [--webhook URL] ...

#include <csignal>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "railguard/cli.hpp"

namespace {

void add_pipeline_flags(CLI::App& cmd, railguard::PipelineConfig& cfg, std::string& mode,
                        std::optional<std::string>& calibration) {
  cmd.add_option("--calibration", calibration, "Calibration JSON (scalar or homography)");
  cmd.add_option("--threshold-m", cfg.threshold_m, "Breach threshold in meters")->capture_default_str();
  cmd.add_option("--debounce", cfg.debounce_frames, "Consecutive breach frames before raising")
      ->capture_default_str();
  cmd.add_option("--release", cfg.release_frames, "Consecutive clear frames before clearing")
      ->capture_default_str();
  cmd.add_option("--hysteresis-m", cfg.hysteresis_m, "Extra clearance needed to clear an alert")
      ->capture_default_str();
  cmd.add_option("--min-track-conf", cfg.min_track_confidence, "Confidence floor for track boxes")
      ->capture_default_str();
  cmd.add_option("--min-object-conf", cfg.min_object_confidence, "Confidence floor for persons/objects")
      ->capture_default_str();
  cmd.add_option("--distance-mode", mode, "center | polyline")
      ->check(CLI::IsMember({"center", "polyline"}))
      ->capture_default_str();
}

railguard::DistanceMode to_mode(const std::string& m) {
  return m == "polyline" ? railguard::DistanceMode::center_to_polyline
                         : railguard::DistanceMode::center_to_center;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = railguard::cli;

  CLI::App app{"railguard: rail-track proximity alerts from object detections"};
  app.require_subcommand(1);

  cli::AnalyzeOptions analyze;
  std::string analyze_mode = "center";
  auto* a = app.add_subcommand("analyze", "Run the proximity pipeline over a detection stream");
  a->add_option("--detections", analyze.detections, "Wire-format detections, or - for stdin")->required();
  add_pipeline_flags(*a, analyze.config, analyze_mode, analyze.calibration);
  a->add_flag("--emit-status", analyze.emit_status, "Also write one status line per object and frame");
  a->add_flag("--emit-overlay", analyze.emit_overlay, "Write per-frame overlay geometry (needs --out)");
  a->add_option("--out", analyze.out_dir, "Output directory (alerts.jsonl, status.jsonl, summary.json)");

  cli::EvaluateOptions evaluate;
  std::string eval_class = "person";
  auto* e = app.add_subcommand("evaluate", "Score predictions against ground truth");
  e->add_option("--detections", evaluate.predictions, "Predicted detections (wire format)")->required();
  e->add_option("--gt", evaluate.ground_truth, "Ground truth (wire format, confidence 1.0)")->required();
  e->add_option("--iou", evaluate.config.iou_threshold, "IoU match threshold")->capture_default_str();
  e->add_option("--class", eval_class, "Class to evaluate")
      ->check(CLI::IsMember({"track", "person", "object"}))
      ->capture_default_str();
  e->add_option("--min-conf", evaluate.config.min_confidence, "Ignore predictions below this confidence");
  e->add_option("--out", evaluate.out_dir, "Output directory (metrics.json, pr_curve.csv, f1_curve.csv)");

  cli::SimulateOptions simulate;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic detection stream and its ground truth");
  s->add_option("--scenario", simulate.scenario, "Scenario JSON")->required();
  s->add_option("--threshold-m", simulate.thresholds, "Thresholds for the breach-interval document");
  s->add_option("--out", simulate.out_dir, "Output directory (stream.jsonl, ground_truth.jsonl, breaches.json)");

  cli::ReportOptions report;
  std::string report_kind = "track";
  auto* r = app.add_subcommand("report", "Render a method comparison table");
  r->add_option("--rows", report.rows, "CSV with Method,Accuracy,Precision-Recall,<third column>")->required();
  r->add_option("--kind", report_kind, "track | object")->check(CLI::IsMember({"track", "object"}));
  r->add_option("--out", report.out_dir, "Output directory (text and CSV)");

  cli::ServeOptions serve;
  std::string serve_mode = "center";
  auto* v = app.add_subcommand("serve", "Accept detection streams over TCP/HTTP and emit alerts");
  v->add_option("--listen", serve.listen, "HOST:PORT to bind")->capture_default_str();
  v->add_option("--webhook", serve.webhook, "POST every alert to this http:// URL");
  add_pipeline_flags(*v, serve.config, serve_mode, serve.calibration);
  v->add_flag("--emit-status", serve.emit_status, "Also write status lines to stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return cli::kUsage;
  }

  if (*a) {
    analyze.config.distance_mode = to_mode(analyze_mode);
    return cli::run_analyze(analyze, std::cin, std::cout, std::cerr);
  }
  if (*e) {
    evaluate.config.class_filter = *railguard::parse_class_label(eval_class);
    return cli::run_evaluate(evaluate, std::cout, std::cerr);
  }
  if (*s) {
    if (simulate.thresholds.empty()) simulate.thresholds = {1.0};
    return cli::run_simulate(simulate, std::cout, std::cerr);
  }
  if (*r) {
    report.kind = report_kind == "object" ? railguard::TableKind::object_detection
                                          : railguard::TableKind::track_detection;
    return cli::run_report(report, std::cout, std::cerr);
  }
  // serve: block the shutdown signals everywhere and wait for them here.
  serve.config.distance_mode = to_mode(serve_mode);
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  // A shell may start us with SIGINT ignored (background jobs); an ignored
  // signal is discarded even while blocked, so restore the default first.
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  return cli::run_serve(serve, std::cout, std::cerr, [&](std::uint16_t) {
    int sig = 0;
    sigwait(&signals, &sig);
    railguard::log::info("shutting down on signal " + std::to_string(sig));
  });
}
