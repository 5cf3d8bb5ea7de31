#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "boltpipe/config.hpp"
#include "boltpipe/report.hpp"

namespace boltpipe {

struct StageTiming {
    std::string row;  // e.g. "k-NN filtering"
    double seconds = 0.0;
};
using Timings = std::vector<StageTiming>;

/// Per-process wall times laid out as a two-column table with a total line.
std::string timing_table(const Timings& timings);
void add_timings(Report& report, const Timings& timings);

// Stage runners shared by the subcommands and the end-to-end run. Each adds
// its statistics to `report` and its wall time rows to `timings`.
PointCloud stage_preprocess(const PointCloud& in, const PreprocessConfig& cfg, Report& report, Timings& timings);
FilterResult stage_filter(const PointCloud& in, const FilterConfig& cfg, Report& report, Timings& timings);

struct TrainOutcome {
    segnet::SegModel model;
    segnet::TrainResult curve;
    std::vector<double> fold_val_loss;  // filled when cross-validating
};
/// Tiles every cloud, holds out one fold when train.folds > 1, and trains.
/// With `cross_validate`, each fold is held out once on a fresh model first;
/// the returned model is the one trained with fold 0 held out.
TrainOutcome stage_train(const std::vector<PointCloud>& clouds, const segnet::ArchConfig& arch,
                         const segnet::TrainConfig& train, bool cross_validate, Report& report, Timings& timings);
PointCloud stage_predict(const segnet::SegModel& model, const PointCloud& in, const segnet::PredictConfig& cfg,
                         Report& report, Timings& timings);
EvalReport stage_eval(const PointCloud& pred, const PointCloud& gt, const EvalConfig& cfg, Report& report,
                      Timings& timings);
/// Copy of `cloud` with "distance" and "bolt_count" channels (and ramp colors
/// from the distance map) computed from the label-1 points of `pred`.
PointCloud stage_maps(const PointCloud& cloud, const PointCloud& pred, const MapsConfig& cfg, Report& report,
                      Timings& timings);

/// Writes through a temporary file and renames, so a crash never leaves a
/// truncated artifact behind.
void save_ply_atomic(const PointCloud& cloud, const std::string& path);

struct PipelineConfig {
    std::string input;        // raw scan
    std::string workdir = "boltpipe_run";
    std::string mode = "predict";  // predict | train
    std::string model;        // predict: existing model; train: output (default <workdir>/model.bin)
    std::string ground_truth;  // labeled cloud for eval (default: the input when it carries labels)
    bool eval = true;
    bool maps = true;
    bool force = false;  // ignore existing artifacts
    bool cross_validate = false;

    PreprocessConfig preprocess;
    FilterConfig filter;
    segnet::ArchConfig arch;
    segnet::TrainConfig train;
    segnet::PredictConfig predict;
    EvalConfig evaluation;
    MapsConfig map;

    /// ConfigError before any work when inputs are missing or settings are out of range.
    void validate() const;
};

/// Reads [run] plus every stage section.
PipelineConfig pipeline_config(const ConfigFile& file);

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("stage " + stage + " failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct PipelineResult {
    Timings timings;                  // executed stages only
    std::vector<std::string> skipped;  // stages whose artifacts were current
    std::vector<std::string> artifacts;
    Report report;
};

/// preprocess -> filter -> train | predict -> eval -> maps. A stage is skipped
/// when its artifact exists and is newer than every input it reads. Throws
/// StageError naming the failing stage; earlier artifacts stay on disk.
PipelineResult run_pipeline(const PipelineConfig& cfg);

} // namespace boltpipe
