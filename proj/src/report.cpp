#include "depthbnn/report.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <stdexcept>

namespace depthbnn {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  auto os = open_out(path);
  os << "epoch,train_vfe,val_vfe,depth_mean,depth_std,support_size\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << num(r.train_vfe) << ',' << (r.val_vfe ? num(*r.val_vfe) : "") << ','
       << num(r.depth_mean) << ',' << num(r.depth_std) << ',' << r.support_size << '\n';
  }
}

nlohmann::json summary_json(const RunResult& result, const TrainConfig& config) {
  nlohmann::json j;
  j["prior_kind"] = to_string(config.prior_kind);
  j["omega"] = config.omega;
  j["seed"] = config.seed;
  j["epochs"] = config.epochs;
  j["config_hash"] = config_hash(config);
  j["best_val_vfe"] = result.best_val_vfe;
  j["best_epoch"] = result.best_epoch;
  j["test_accuracy"] = result.test_accuracy;
  j["depth_posterior_mean"] = result.depth_posterior_mean;
  j["depth_posterior_std"] = result.depth_posterior_std;
  j["depth_posterior"] = {{"support_lo", result.depth_posterior.support.lo},
                          {"support_hi", result.depth_posterior.support.hi},
                          {"probs", result.depth_posterior.probs}};
  j["depth_params"] = result.best.depth_params;
  j["data_checksums"] = {{"train", result.train_checksum}, {"val", result.val_checksum}, {"test", result.test_checksum}};
  return j;
}

void write_run_artifacts(const std::filesystem::path& dir, const TrainConfig& config, const RunResult& result) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "config.txt", to_text(config));
  write_history_csv(dir / "history.csv", result.history);
  write_text_file(dir / "summary.json", summary_json(result, config).dump(2) + "\n");
  save_checkpoint(dir / "checkpoint.bin", result.best);
}

void write_aggregate_csvs(const std::filesystem::path& dir, const std::vector<SuiteCell>& cells) {
  std::filesystem::create_directories(dir);
  const auto rows = aggregate(cells);

  auto acc = open_out(dir / "accuracy_vs_omega.csv");
  acc << "omega,prior,n_ok,n_failed,accuracy_mean,accuracy_std\n";
  for (const auto& r : rows) {
    acc << num(r.omega) << ',' << to_string(r.kind) << ',' << r.n_ok << ',' << r.n_failed << ','
        << num(r.accuracy_mean) << ',' << num(r.accuracy_std) << '\n';
  }

  auto depth = open_out(dir / "depth_vs_omega.csv");
  depth << "omega,prior,n_ok,depth_mean_mean,depth_mean_std,depth_std_mean,depth_std_std\n";
  for (const auto& r : rows) {
    depth << num(r.omega) << ',' << to_string(r.kind) << ',' << r.n_ok << ',' << num(r.depth_mean_mean) << ','
          << num(r.depth_mean_std) << ',' << num(r.depth_std_mean) << ',' << num(r.depth_std_std) << '\n';
  }

  auto per_cell = open_out(dir / "cells.csv");
  per_cell << "omega,run,prior,status,test_accuracy,depth_mean,depth_std,data_checksum,failure\n";
  for (const auto& c : cells) {
    per_cell << num(c.omega) << ',' << c.run << ',' << to_string(c.kind) << ',' << (c.result ? "ok" : "failed") << ','
             << (c.result ? num(c.result->test_accuracy) : "") << ',' << (c.result ? num(c.result->depth_posterior_mean) : "")
             << ',' << (c.result ? num(c.result->depth_posterior_std) : "") << ',' << c.data_checksum << ','
             << csv_escape(c.error) << '\n';
  }
}

}  // namespace depthbnn
