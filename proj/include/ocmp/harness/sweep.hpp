#pragma once

#include "ocmp/harness/results.hpp"
#include "ocmp/repetition.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ocmp::harness {

// Collects runs in execution order and writes results.csv, boundaries.csv,
// records/<config>_s<seed>.json and meta.json (timings, warnings) under `dir`.
class ResultSink {
   public:
    void add(const PipelineResult& run);
    const std::vector<ResultRecord>& records() const { return records_; }
    void write(const std::string& dir, const std::vector<std::string>& warnings, const std::string& command) const;

   private:
    std::vector<ResultRecord> records_;
    std::vector<std::vector<ResultRecord>> runs_;
    std::vector<double> seconds_;
};

// Chance accuracy and log2 CR = 0.
ReferencePoint reference_point(int num_classes);

struct SeedDecision {
    uint64_t seed = 0;
    OrderComparison comparison;
    std::vector<ParetoPoint> front_xy;
    std::vector<ParetoPoint> front_yx;
    size_t dropped_below_reference = 0;
};

struct PairSweepResult {
    StageKind x;
    StageKind y;
    std::vector<SeedDecision> per_seed;
    EdgeRow majority;  // decision held by more than half of the seeds, else inconclusive
    std::vector<std::string> flags;  // reversals against the expected D < P < Q < E precedence
};

// Both orders over the grid product of the two kinds, for every configured seed.
PairSweepResult sweep_pairwise(Runner& runner, StageKind x, StageKind y, ResultSink& sink);

// Decisions from records already on disk (pairs with both XY and YX tags present).
std::vector<PairSweepResult> decisions_from_records(const std::vector<ResultRecord>& records, int num_classes,
                                                    double margin);

std::string describe_sweep(const PairSweepResult& r);

struct InsertionReport {
    StageKind x;
    StageKind y;
    StageKind inserted;
    PairSweepResult with_insert;  // fronts of X[Z]Y against Y[Z]X
    EdgeDecision pairwise = EdgeDecision::Inconclusive;
    bool consistent = false;
};

// X Z Y against Y Z X with Z at its default hyperparameters, compared with the
// plain pairwise decision (`pairwise` if given, otherwise swept here too).
InsertionReport validate_insertion(Runner& runner, StageKind x, StageKind y, StageKind inserted, ResultSink& sink,
                                   std::optional<EdgeDecision> pairwise = std::nullopt);

struct PlanResult {
    TopoOrder order;
    PrecedenceGraph graph;
    std::string text;
};

PlanResult plan(const std::vector<PrecedenceEdge>& edges, const std::vector<StageKind>& extra_nodes = {});
// Reads an edges file or a results file (pairwise decisions are recomputed).
PlanResult plan_from_file(const std::string& path, int num_classes, double margin);

inline const std::vector<double> kLossThresholds{0.2, 0.6, 1.0, 2.0};

struct ReportFiles {
    std::string table;  // table.csv contents
    std::vector<std::string> written;
};

// Threshold table, per-tag front files and per-tag trajectory files for a results directory.
ReportFiles report(const std::string& results_dir);

// Runs the repetition arms for every seed; points from all seeds are kept.
RepetitionReport repeat_study(Runner& runner, const std::vector<CompressionStage>& base, StageKind kind,
                              ResultSink& sink);
std::string describe_repetition(const RepetitionReport& r);

}  // namespace ocmp::harness
