#pragma once

// Plot-ready artifacts: history CSV, run summary JSON, suite aggregates.
//
// history.csv            epoch,train_vfe,val_vfe,depth_mean,depth_std,support_size
//                        (val_vfe empty on epochs without a validation pass)
// accuracy_vs_omega.csv  omega,prior,n_ok,n_failed,accuracy_mean,accuracy_std
// depth_vs_omega.csv     omega,prior,n_ok,depth_mean_mean,depth_mean_std,depth_std_mean,depth_std_std
// cells.csv              omega,run,prior,status,test_accuracy,depth_mean,depth_std,data_checksum,failure

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthbnn/config.hpp"
#include "depthbnn/trainer.hpp"

namespace depthbnn {

std::string csv_escape(const std::string& field);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
nlohmann::json summary_json(const RunResult& result, const TrainConfig& config);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// history.csv, summary.json, checkpoint.bin and config.txt under `dir`.
void write_run_artifacts(const std::filesystem::path& dir, const TrainConfig& config, const RunResult& result);

void write_aggregate_csvs(const std::filesystem::path& dir, const std::vector<SuiteCell>& cells);

}  // namespace depthbnn
