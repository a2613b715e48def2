#pragma once

#include "ocmp/harness/pipeline.hpp"
#include "ocmp/order.hpp"

#include <string>
#include <vector>

namespace ocmp::harness {

inline constexpr const char* kResultsHeader = "# ocmp-results v1";
inline constexpr const char* kEdgesHeader = "# ocmp-edges v1";

// Summary table: versioned header line, a column line, then one record per line.
std::string results_csv(const std::vector<ResultRecord>& records);
std::vector<ResultRecord> parse_results_csv(const std::string& text);

// Stage-boundary trajectory rows for every record's pipeline (one set per run).
std::string boundaries_csv(const std::vector<ResultRecord>& records);

// Full record of one run (all thresholds and boundary cost reports) as JSON text.
std::string record_json(const std::vector<ResultRecord>& run_records);

struct EdgeRow {
    StageKind x = StageKind::Distill;
    StageKind y = StageKind::Prune;
    EdgeDecision decision = EdgeDecision::Inconclusive;
    double hv_xy = 0.0;
    double hv_yx = 0.0;
    double margin = 0.0;
    std::string note;  // e.g. seed votes
};

std::string edges_csv(const std::vector<EdgeRow>& rows);
std::vector<EdgeRow> parse_edges_csv(const std::string& text);

// Precedence edges from rows; two rows over one pair that disagree raise PlanningError.
std::vector<PrecedenceEdge> edges_from_rows(const std::vector<EdgeRow>& rows);

// Explicit edge list such as "D>P,P>Q".
std::vector<PrecedenceEdge> parse_edge_list(const std::string& text);

ParetoPoint to_point(const ResultRecord& r);

std::string format_double(double v);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace ocmp::harness
