#include "ocmp/harness/sweep.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <set>

namespace ocmp::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
    return out;
}

std::string index_id(const std::string& tag, size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return tag + "-" + buf;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

using PointsByTagSeed = std::map<std::pair<std::string, uint64_t>, std::vector<ParetoPoint>>;

PointsByTagSeed group_points(const std::vector<ResultRecord>& records) {
    PointsByTagSeed out;
    for (const auto& r : records) out[{r.pipeline_tag, r.seed}].push_back(to_point(r));
    return out;
}

// Per-seed comparisons of two tags plus the seed-majority decision.
PairSweepResult decide(StageKind x, StageKind y, const std::string& tag_xy, const std::string& tag_yx,
                       const PointsByTagSeed& points, const std::vector<uint64_t>& seeds, const ReferencePoint& ref,
                       double margin) {
    PairSweepResult res{x, y, {}, {}, {}};
    res.majority.x = x;
    res.majority.y = y;
    int votes_xy = 0, votes_yx = 0;
    double sum_xy = 0.0, sum_yx = 0.0;
    for (uint64_t seed : seeds) {
        SeedDecision d;
        d.seed = seed;
        auto fetch = [&](const std::string& tag) {
            auto it = points.find({tag, seed});
            if (it == points.end()) throw ValidationError("no results for pipeline " + tag + " seed " + std::to_string(seed));
            return it->second;
        };
        auto pxy = fetch(tag_xy);
        auto pyx = fetch(tag_yx);
        d.dropped_below_reference = clip_to_reference(pxy, ref) + clip_to_reference(pyx, ref);
        d.front_xy = pxy.empty() ? pxy : pareto_front(pxy);
        d.front_yx = pyx.empty() ? pyx : pareto_front(pyx);
        d.comparison = compare_orders({d.front_xy, ref}, {d.front_yx, ref}, margin);
        votes_xy += d.comparison.decision == EdgeDecision::XBeforeY;
        votes_yx += d.comparison.decision == EdgeDecision::YBeforeX;
        sum_xy += d.comparison.hv_xy;
        sum_yx += d.comparison.hv_yx;
        res.per_seed.push_back(std::move(d));
    }
    const int n = static_cast<int>(seeds.size());
    EdgeRow& m = res.majority;
    m.hv_xy = sum_xy / n;
    m.hv_yx = sum_yx / n;
    if (2 * votes_xy > n) m.decision = EdgeDecision::XBeforeY;
    if (2 * votes_yx > n) m.decision = EdgeDecision::YBeforeX;
    const double hi = std::max(m.hv_xy, m.hv_yx), lo = std::min(m.hv_xy, m.hv_yx);
    m.margin = lo > 0.0 ? hi / lo - 1.0 : (hi > 0.0 ? INFINITY : 0.0);
    m.note = "votes " + tag_xy + "=" + std::to_string(votes_xy) + " " + tag_yx + "=" + std::to_string(votes_yx) +
             " none=" + std::to_string(n - votes_xy - votes_yx);
    const bool expect_xy = x < y;
    if ((expect_xy && m.decision == EdgeDecision::YBeforeX) || (!expect_xy && m.decision == EdgeDecision::XBeforeY)) {
        res.flags.push_back(std::string("REVERSED: observed ") +
                            (m.decision == EdgeDecision::XBeforeY ? tag_xy : tag_yx) + " ahead of the expected order (" +
                            m.note + ")");
    } else if (m.decision == EdgeDecision::Inconclusive) {
        res.flags.push_back("INCONCLUSIVE: no seed majority for " + tag_xy + " vs " + tag_yx + " (" + m.note + ")");
    }
    return res;
}

std::string two(StageKind a, StageKind b) { return std::string(1, stage_letter(a)) + stage_letter(b); }

std::vector<ResultRecord> run_orders(Runner& runner, const std::vector<std::vector<CompressionStage>>& xy_configs,
                                     bool also_reverse, ResultSink& sink) {
    std::vector<ResultRecord> records;
    for (uint64_t seed : runner.config().seeds) {
        for (int pass = 0; pass < (also_reverse ? 2 : 1); ++pass) {
            for (size_t i = 0; i < xy_configs.size(); ++i) {
                auto stages = xy_configs[i];
                if (pass == 1) std::reverse(stages.begin(), stages.end());
                const PipelineResult r = runner.run(stages, seed, index_id(pipeline_tag(stages), i));
                sink.add(r);
                records.insert(records.end(), r.records.begin(), r.records.end());
            }
        }
    }
    return records;
}

}  // namespace

void ResultSink::add(const PipelineResult& run) {
    records_.insert(records_.end(), run.records.begin(), run.records.end());
    runs_.push_back(run.records);
    seconds_.push_back(run.wall_seconds);
}

void ResultSink::write(const std::string& dir, const std::vector<std::string>& warnings,
                       const std::string& command) const {
    fs::create_directories(fs::path(dir) / "records");
    write_text((fs::path(dir) / "results.csv").string(), results_csv(records_));
    write_text((fs::path(dir) / "boundaries.csv").string(), boundaries_csv(records_));
    json meta;
    meta["command"] = command;
    meta["created_utc"] = utc_timestamp();
    meta["runs"] = json::array();
    for (size_t i = 0; i < runs_.size(); ++i) {
        const auto& r0 = runs_[i].front();
        const std::string name = sanitize(r0.config_id) + "_s" + std::to_string(r0.seed) + ".json";
        write_text((fs::path(dir) / "records" / name).string(), record_json(runs_[i]));
        meta["runs"].push_back({{"config_id", r0.config_id}, {"seed", r0.seed}, {"wall_seconds", seconds_[i]}});
    }
    meta["warnings"] = warnings;
    write_text((fs::path(dir) / "meta.json").string(), meta.dump(1) + "\n");
}

ReferencePoint reference_point(int num_classes) {
    if (num_classes < 1) throw ValidationError("reference point needs a positive class count");
    return {100.0 / num_classes, 0.0};
}

PairSweepResult sweep_pairwise(Runner& runner, StageKind x, StageKind y, ResultSink& sink) {
    if (x == y) throw ValidationError("sweep_pairwise: the two stage kinds must differ");
    const auto& cfg = runner.config();
    std::vector<std::vector<CompressionStage>> configs;
    for (const auto& a : grid_stages(cfg, x)) {
        for (const auto& b : grid_stages(cfg, y)) configs.push_back({a, b});
    }
    const auto records = run_orders(runner, configs, true, sink);
    const int classes = runner.data(cfg.seeds.front()).train.num_classes;
    return decide(x, y, two(x, y), two(y, x), group_points(records), cfg.seeds, reference_point(classes),
                  cfg.edge_margin);
}

std::vector<PairSweepResult> decisions_from_records(const std::vector<ResultRecord>& records, int num_classes,
                                                    double margin) {
    const auto points = group_points(records);
    std::map<std::string, std::set<uint64_t>> seeds_by_tag;
    for (const auto& [key, pts] : points) seeds_by_tag[key.first].insert(key.second);
    std::vector<PairSweepResult> out;
    for (const auto& [tag, seeds] : seeds_by_tag) {
        if (tag.size() != 2 || tag[0] == tag[1]) continue;
        const StageKind x = stage_from_letter(tag[0]), y = stage_from_letter(tag[1]);
        if (!(x < y)) continue;  // each unordered pair once
        const std::string rev = two(y, x);
        auto it = seeds_by_tag.find(rev);
        if (it == seeds_by_tag.end()) continue;
        std::vector<uint64_t> common;
        std::set_intersection(seeds.begin(), seeds.end(), it->second.begin(), it->second.end(),
                              std::back_inserter(common));
        if (common.empty()) continue;
        out.push_back(decide(x, y, tag, rev, points, common, reference_point(num_classes), margin));
    }
    return out;
}

std::string describe_sweep(const PairSweepResult& r) {
    const std::string xy = two(r.x, r.y), yx = two(r.y, r.x);
    std::string s;
    for (const auto& d : r.per_seed) {
        const auto& c = d.comparison;
        std::string dec = c.decision == EdgeDecision::XBeforeY   ? std::string(1, stage_letter(r.x)) + "->" + stage_letter(r.y)
                          : c.decision == EdgeDecision::YBeforeX ? std::string(1, stage_letter(r.y)) + "->" + stage_letter(r.x)
                                                                 : "inconclusive";
        char buf[256];
        std::snprintf(buf, sizeof buf, "seed %llu: hv(%s)=%.4f hv(%s)=%.4f front sizes %zu/%zu -> %s",
                      static_cast<unsigned long long>(d.seed), xy.c_str(), c.hv_xy, yx.c_str(), c.hv_yx,
                      d.front_xy.size(), d.front_yx.size(), dec.c_str());
        s += buf;
        if (d.dropped_below_reference) s += " (" + std::to_string(d.dropped_below_reference) + " points below reference)";
        s += "\n";
    }
    const auto& m = r.majority;
    s += "decision: ";
    s += m.decision == EdgeDecision::XBeforeY   ? std::string(1, stage_letter(r.x)) + "->" + stage_letter(r.y)
         : m.decision == EdgeDecision::YBeforeX ? std::string(1, stage_letter(r.y)) + "->" + stage_letter(r.x)
                                                : "inconclusive";
    s += " [" + m.note + "]\n";
    for (const auto& f : r.flags) s += f + "\n";
    return s;
}

InsertionReport validate_insertion(Runner& runner, StageKind x, StageKind y, StageKind inserted, ResultSink& sink,
                                   std::optional<EdgeDecision> pairwise) {
    if (x == y || inserted == x || inserted == y) {
        throw ValidationError("validate_insertion: the three stage kinds must be distinct");
    }
    const auto& cfg = runner.config();
    InsertionReport rep{x, y, inserted, {}, EdgeDecision::Inconclusive, false};
    if (pairwise) {
        rep.pairwise = *pairwise;
    } else {
        rep.pairwise = sweep_pairwise(runner, x, y, sink).majority.decision;
    }
    const CompressionStage z = make_stage(cfg, inserted);
    std::vector<std::vector<CompressionStage>> configs;
    for (const auto& a : grid_stages(cfg, x)) {
        for (const auto& b : grid_stages(cfg, y)) configs.push_back({a, z, b});
    }
    const auto records = run_orders(runner, configs, true, sink);
    const std::string mid(1, stage_letter(inserted));
    const int classes = runner.data(cfg.seeds.front()).train.num_classes;
    rep.with_insert = decide(x, y, std::string(1, stage_letter(x)) + mid + stage_letter(y),
                             std::string(1, stage_letter(y)) + mid + stage_letter(x), group_points(records), cfg.seeds,
                             reference_point(classes), cfg.edge_margin);
    rep.consistent = rep.with_insert.majority.decision == rep.pairwise;
    return rep;
}

PlanResult plan(const std::vector<PrecedenceEdge>& edges, const std::vector<StageKind>& extra_nodes) {
    PlanResult r;
    r.graph = build_dag(extra_nodes, edges);
    r.order = toposort(r.graph);
    r.text = sequence_string(r.order.order) + (r.order.unique ? " (unique)" : " (not unique)") + "\n";
    for (const auto& a : r.order.ambiguities) r.text += "  ambiguous " + a + "\n";
    for (const auto& e : r.graph.edges) {
        r.text += std::string("  edge ") + stage_letter(e.before) + "->" + stage_letter(e.after) + " margin " +
                  format_double(e.margin) + "\n";
    }
    return r;
}

PlanResult plan_from_file(const std::string& path, int num_classes, double margin) {
    const std::string text = read_text(path);
    std::vector<EdgeRow> rows;
    if (text.rfind(kEdgesHeader, 0) == 0) {
        rows = parse_edges_csv(text);
    } else if (text.rfind(kResultsHeader, 0) == 0) {
        for (const auto& d : decisions_from_records(parse_results_csv(text), num_classes, margin)) {
            rows.push_back(d.majority);
        }
    } else {
        throw ValidationError("plan: '" + path + "' is neither an edges file nor a results file");
    }
    std::vector<StageKind> nodes;
    for (const auto& r : rows) {
        nodes.push_back(r.x);
        nodes.push_back(r.y);
    }
    return plan(edges_from_rows(rows), nodes);
}

ReportFiles report(const std::string& dir) {
    const fs::path results = fs::path(dir) / "results.csv";
    if (!fs::exists(results)) throw ValidationError("report: no results.csv in '" + dir + "'");
    const auto records = parse_results_csv(read_text(results.string()));
    if (records.empty()) throw ValidationError("report: '" + dir + "' holds no result records");

    std::vector<std::string> tags;
    std::map<std::string, std::vector<ParetoPoint>> points;
    std::map<std::string, std::vector<double>> best;
    for (const auto& r : records) {
        if (!points.count(r.pipeline_tag)) tags.push_back(r.pipeline_tag);
        points[r.pipeline_tag].push_back(to_point(r));
        auto& row = best[r.pipeline_tag];
        row.resize(kLossThresholds.size(), -1.0);
        for (size_t t = 0; t < kLossThresholds.size(); ++t) {
            if (r.baseline_accuracy - r.accuracy <= kLossThresholds[t] + 1e-9) row[t] = std::max(row[t], r.cost.bitops_cr);
        }
    }

    ReportFiles out;
    out.table = "pipeline_tag";
    for (double t : kLossThresholds) out.table += ",loss<=" + format_double(t);
    out.table += "\n";
    for (const auto& tag : tags) {
        out.table += tag;
        for (double v : best[tag]) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", v);
            out.table += "," + (v < 0.0 ? std::string("-") : std::string(buf));
        }
        out.table += "\n";
        std::string front = "# accuracy log2_bitops_cr\n";
        for (const auto& p : pareto_front(points[tag])) {
            front += format_double(p.accuracy) + " " + format_double(std::log2(p.bitops_cr)) + "\n";
        }
        const auto name = (fs::path(dir) / ("front_" + sanitize(tag) + ".dat")).string();
        write_text(name, front);
        out.written.push_back(name);
    }
    const auto table_path = (fs::path(dir) / "table.csv").string();
    write_text(table_path, out.table);
    out.written.push_back(table_path);

    const fs::path bpath = fs::path(dir) / "boundaries.csv";
    if (fs::exists(bpath)) {
        std::map<std::string, std::string> traj;
        std::istringstream in(read_text(bpath.string()));
        std::string line;
        std::getline(in, line);
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> f;
            std::string cur;
            std::istringstream ls(line);
            while (std::getline(ls, cur, ',')) f.push_back(cur);
            if (f.size() < 10) continue;
            auto& t = traj[f[1]];
            if (t.empty()) t = "# config_id seed boundary stage accuracy log2_bitops_cr\n";
            t += f[0] + " " + f[2] + " " + f[3] + " " + f[4].substr(0, 1) + " " + f[6] + " " +
                 format_double(std::log2(std::stod(f[7]))) + "\n";
        }
        for (const auto& [tag, body] : traj) {
            const auto name = (fs::path(dir) / ("trajectory_" + sanitize(tag) + ".dat")).string();
            write_text(name, body);
            out.written.push_back(name);
        }
    }
    return out;
}

RepetitionReport repeat_study(Runner& runner, const std::vector<CompressionStage>& base, StageKind kind,
                              ResultSink& sink) {
    if (!runner.config().allow_repeats) throw ValidationError("repeat_study: runner must allow repeated stage kinds");
    size_t counter = 0;
    return evaluate_repetition(base, kind, [&](const RepetitionArm& arm) {
        std::vector<ParetoPoint> pts;
        const std::string id =
            sanitize(std::string("R") + stage_letter(kind) + "-" + arm.name + "-" + arm.level) + "-" +
            std::to_string(counter++);
        for (uint64_t seed : runner.config().seeds) {
            const PipelineResult r = runner.run(arm.stages, seed, id);
            sink.add(r);
            for (const auto& rec : r.records) pts.push_back(to_point(rec));
        }
        return pts;
    });
}

std::string describe_repetition(const RepetitionReport& r) {
    std::string s = std::string("repetition study for ") + stage_letter(r.kind) + "\n";
    for (const auto& a : r.arms) {
        s += "  " + a.arm.level + " " + a.arm.name + " [" + pipeline_tag(a.arm.stages) + "]:";
        for (const auto& p : pareto_front(a.points)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, " (%.2f%%, %.2fx)", p.accuracy, p.bitops_cr);
            s += buf;
        }
        s += "\n";
    }
    return s;
}

}  // namespace ocmp::harness
