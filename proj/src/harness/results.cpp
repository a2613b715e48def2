#include "ocmp/harness/results.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ocmp::harness {

using nlohmann::json;

namespace {

const char* kResultColumns =
    "config_id,pipeline_tag,stage_params,seed,tau,accuracy,bitops_cr,cr,storage_bits,expected_bitops,"
    "bitops_static,baseline_bitops,baseline_storage_bits,baseline_accuracy,finetune_lr";

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::vector<std::string> data_lines(const std::string& text, const char* header, const char* what) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw ValidationError(std::string(what) + ": missing '" + header + "' header line");
    }
    std::getline(in, line);  // column names
    std::vector<std::string> out;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

double to_double(const std::string& s, const std::string& field) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ValidationError("bad number '" + s + "' in field " + field);
    return v;
}

int64_t to_int(const std::string& s, const std::string& field) {
    int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError("bad integer '" + s + "' in field " + field);
    return v;
}

std::string format_float(float v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string tau_string(const std::optional<double>& tau) { return tau ? format_double(*tau) : "-"; }

json cost_json(const CostReport& c) {
    return json{{"macs_per_layer", c.macs_per_layer}, {"bitops_static", c.bitops_static},
                {"expected_bitops", c.expected_bitops}, {"storage_bits", c.storage_bits},
                {"bitops_cr", c.bitops_cr},           {"cr", c.cr},
                {"exit_distribution", c.exit_distribution}};
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string results_csv(const std::vector<ResultRecord>& records) {
    std::string out = std::string(kResultsHeader) + "\n" + kResultColumns + "\n";
    for (const auto& r : records) {
        out += r.config_id + "," + r.pipeline_tag + "," + r.stage_params + "," + std::to_string(r.seed) + "," +
               tau_string(r.tau) + "," + format_double(r.accuracy) + "," + format_double(r.cost.bitops_cr) + "," +
               format_double(r.cost.cr) + "," + std::to_string(r.cost.storage_bits) + "," +
               format_double(r.cost.expected_bitops) + "," + std::to_string(r.cost.bitops_static) + "," +
               std::to_string(r.baseline.bitops) + "," + std::to_string(r.baseline.storage_bits) + "," +
               format_double(r.baseline_accuracy) + "," + format_float(r.finetune_lr) + "\n";
    }
    return out;
}

std::vector<ResultRecord> parse_results_csv(const std::string& text) {
    std::vector<ResultRecord> out;
    size_t row = 2;
    for (const auto& line : data_lines(text, kResultsHeader, "results file")) {
        ++row;
        const auto f = split(line, ',');
        if (f.size() != 15) {
            throw ValidationError("results file line " + std::to_string(row) + ": expected 15 fields, found " +
                                  std::to_string(f.size()));
        }
        ResultRecord r;
        r.config_id = f[0];
        r.pipeline_tag = f[1];
        r.stage_params = f[2];
        r.seed = static_cast<uint64_t>(to_int(f[3], "seed"));
        if (f[4] != "-") r.tau = to_double(f[4], "tau");
        r.accuracy = to_double(f[5], "accuracy");
        r.cost.bitops_cr = to_double(f[6], "bitops_cr");
        r.cost.cr = to_double(f[7], "cr");
        r.cost.storage_bits = to_int(f[8], "storage_bits");
        r.cost.expected_bitops = to_double(f[9], "expected_bitops");
        r.cost.bitops_static = to_int(f[10], "bitops_static");
        r.baseline.bitops = to_int(f[11], "baseline_bitops");
        r.baseline.storage_bits = to_int(f[12], "baseline_storage_bits");
        r.baseline_accuracy = to_double(f[13], "baseline_accuracy");
        r.finetune_lr = static_cast<float>(to_double(f[14], "finetune_lr"));
        out.push_back(std::move(r));
    }
    return out;
}

std::string boundaries_csv(const std::vector<ResultRecord>& records) {
    std::string out =
        "# ocmp-boundaries v1\nconfig_id,pipeline_tag,seed,boundary,stage,tau,accuracy,bitops_cr,cr,storage_bits\n";
    std::map<std::pair<std::string, uint64_t>, bool> seen;
    for (const auto& r : records) {
        if (!seen.emplace(std::make_pair(r.config_id, r.seed), true).second) continue;
        for (const auto& b : r.boundaries) {
            out += r.config_id + "," + r.pipeline_tag + "," + std::to_string(r.seed) + "," + std::to_string(b.index) +
                   "," + b.stage + "," + tau_string(b.tau) + "," + format_double(b.accuracy) + "," +
                   format_double(b.cost.bitops_cr) + "," + format_double(b.cost.cr) + "," +
                   std::to_string(b.cost.storage_bits) + "\n";
        }
    }
    return out;
}

std::string record_json(const std::vector<ResultRecord>& run) {
    if (run.empty()) throw ValidationError("record_json: empty run");
    const ResultRecord& r0 = run.front();
    json j;
    j["format"] = "ocmp-record v1";
    j["config_id"] = r0.config_id;
    j["pipeline_tag"] = r0.pipeline_tag;
    j["stage_params"] = r0.stage_params;
    j["seed"] = r0.seed;
    j["finetune_lr"] = r0.finetune_lr;
    j["baseline"] = {{"accuracy", r0.baseline_accuracy},
                     {"bitops", r0.baseline.bitops},
                     {"storage_bits", r0.baseline.storage_bits}};
    j["boundaries"] = json::array();
    for (const auto& b : r0.boundaries) {
        json jb{{"index", b.index}, {"stage", b.stage}, {"accuracy", b.accuracy}, {"cost", cost_json(b.cost)}};
        jb["tau"] = b.tau ? json(*b.tau) : json(nullptr);
        j["boundaries"].push_back(jb);
    }
    j["results"] = json::array();
    for (const auto& r : run) {
        json jr{{"accuracy", r.accuracy}, {"cost", cost_json(r.cost)}};
        jr["tau"] = r.tau ? json(*r.tau) : json(nullptr);
        j["results"].push_back(jr);
    }
    return j.dump(1) + "\n";
}

std::string edges_csv(const std::vector<EdgeRow>& rows) {
    std::string out = std::string(kEdgesHeader) + "\nx,y,decision,hv_xy,hv_yx,margin,note\n";
    for (const auto& e : rows) {
        const char* d = e.decision == EdgeDecision::XBeforeY   ? "x_before_y"
                        : e.decision == EdgeDecision::YBeforeX ? "y_before_x"
                                                               : "inconclusive";
        out += std::string(1, stage_letter(e.x)) + "," + stage_letter(e.y) + "," + d + "," + format_double(e.hv_xy) +
               "," + format_double(e.hv_yx) + "," + format_double(e.margin) + "," + e.note + "\n";
    }
    return out;
}

std::vector<EdgeRow> parse_edges_csv(const std::string& text) {
    std::vector<EdgeRow> out;
    size_t row = 2;
    for (const auto& line : data_lines(text, kEdgesHeader, "edges file")) {
        ++row;
        const auto f = split(line, ',');
        if (f.size() < 6 || f[0].size() != 1 || f[1].size() != 1) {
            throw ValidationError("edges file line " + std::to_string(row) + ": malformed row");
        }
        EdgeRow e;
        e.x = stage_from_letter(f[0][0]);
        e.y = stage_from_letter(f[1][0]);
        if (f[2] == "x_before_y") {
            e.decision = EdgeDecision::XBeforeY;
        } else if (f[2] == "y_before_x") {
            e.decision = EdgeDecision::YBeforeX;
        } else if (f[2] != "inconclusive") {
            throw ValidationError("edges file line " + std::to_string(row) + ": unknown decision '" + f[2] + "'");
        }
        e.hv_xy = to_double(f[3], "hv_xy");
        e.hv_yx = to_double(f[4], "hv_yx");
        e.margin = f[5] == "inf" ? INFINITY : to_double(f[5], "margin");
        if (f.size() > 6) e.note = f[6];
        out.push_back(e);
    }
    return out;
}

std::vector<PrecedenceEdge> edges_from_rows(const std::vector<EdgeRow>& rows) {
    std::map<std::pair<StageKind, StageKind>, std::optional<PrecedenceEdge>> by_pair;
    for (const auto& r : rows) {
        std::optional<PrecedenceEdge> e;
        if (r.decision == EdgeDecision::XBeforeY) e = PrecedenceEdge{r.x, r.y, r.margin};
        if (r.decision == EdgeDecision::YBeforeX) e = PrecedenceEdge{r.y, r.x, r.margin};
        const auto key = std::minmax(r.x, r.y);
        auto it = by_pair.find(key);
        if (it == by_pair.end()) {
            by_pair.emplace(key, e);
            continue;
        }
        const auto& prev = it->second;
        const bool same = prev.has_value() == e.has_value() &&
                          (!e || (prev->before == e->before && prev->after == e->after));
        if (!same) {
            throw PlanningError(std::string("inconsistent input: conflicting rows for pair ") + stage_letter(key.first) +
                                stage_letter(key.second));
        }
    }
    std::vector<PrecedenceEdge> out;
    for (const auto& [k, e] : by_pair) {
        if (e) out.push_back(*e);
    }
    return out;
}

std::vector<PrecedenceEdge> parse_edge_list(const std::string& text) {
    std::vector<PrecedenceEdge> out;
    for (const auto& item : split(text, ',')) {
        if (item.size() != 3 || item[1] != '>') {
            throw ValidationError("edge '" + item + "' is malformed (expected the form D>P)");
        }
        out.push_back({stage_from_letter(item[0]), stage_from_letter(item[2]), 0.0});
    }
    return out;
}

ParetoPoint to_point(const ResultRecord& r) {
    std::string id = r.config_id + "/s" + std::to_string(r.seed);
    if (r.tau) id += "/t" + format_double(*r.tau);
    return {r.accuracy, r.cost.bitops_cr, r.cost.cr, id, r.pipeline_tag};
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace ocmp::harness
