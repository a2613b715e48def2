// ocmp: train, compress and order compression pipelines on toy classifiers.
//
// Exit codes: 0 success, 1 validation error, 2 precedence cycle or inconsistent planning input.

#include "ocmp/checkpoint.hpp"
#include "ocmp/cost.hpp"
#include "ocmp/harness/sweep.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace ocmp;
using namespace ocmp::harness;

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<uint64_t> seed;
    std::string out;
    std::optional<float> finetune_lr;
};

ExperimentConfig resolve(const GlobalFlags& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    if (g.seed) cfg.seeds = {*g.seed};
    if (!g.out.empty()) cfg.out_dir = g.out;
    if (g.finetune_lr) cfg.finetune_lr_override = *g.finetune_lr;
    cfg.validate();
    return cfg;
}

StageKind kind_arg(const std::string& s) {
    if (s.size() != 1) throw ValidationError("expected a single stage letter (D, P, Q or E), got '" + s + "'");
    return stage_from_letter(s[0]);
}

std::vector<CompressionStage> stages_arg(const ExperimentConfig& cfg, const std::string& letters) {
    std::vector<CompressionStage> out;
    for (char c : letters) {
        if (c == ',' || c == ' ') continue;
        out.push_back(make_stage(cfg, stage_from_letter(c)));
    }
    return out;
}

void print_boundaries(const PipelineResult& r) {
    const auto& rec = r.records.front();
    for (const auto& b : rec.boundaries) {
        std::printf("  [%d] %-28s acc %6.2f%%  bitops_cr %9.2fx  cr %7.2fx  storage %lld bits\n", b.index,
                    b.stage.c_str(), b.accuracy, b.cost.bitops_cr, b.cost.cr,
                    static_cast<long long>(b.cost.storage_bits));
    }
    if (rec.tau) {
        for (const auto& x : r.records) {
            std::printf("  tau %-5s acc %6.2f%%  bitops_cr %9.2fx\n", format_double(*x.tau).c_str(), x.accuracy,
                        x.cost.bitops_cr);
        }
    }
}

int cmd_train(const ExperimentConfig& cfg) {
    Runner runner(cfg);
    fs::create_directories(cfg.out_dir);
    for (uint64_t seed : cfg.seeds) {
        const ModelGraph& m = runner.baseline(seed);
        const std::string path = (fs::path(cfg.out_dir) / ("base_s" + std::to_string(seed) + ".ckpt")).string();
        save_checkpoint(m, path);
        std::printf("seed %llu: %s width %g  test accuracy %.2f%%  -> %s\n", static_cast<unsigned long long>(seed),
                    m.arch.c_str(), m.width_multiplier, runner.baseline_accuracy(seed), path.c_str());
    }
    return 0;
}

int cmd_compress(ExperimentConfig cfg, const std::string& letters) {
    if (!letters.empty()) cfg.stages = stages_arg(cfg, letters);
    check_unique_kinds(cfg.stages, cfg.allow_repeats);
    Runner runner(cfg);
    ResultSink sink;
    for (uint64_t seed : cfg.seeds) {
        const PipelineResult r = runner.run(cfg.stages, seed, pipeline_tag(cfg.stages) + "-000");
        sink.add(r);
        std::printf("seed %llu: %s\n", static_cast<unsigned long long>(seed), stage_params(cfg.stages).c_str());
        print_boundaries(r);
        fs::create_directories(cfg.out_dir);
        save_checkpoint(*r.model, (fs::path(cfg.out_dir) / ("final_" + pipeline_tag(cfg.stages) + "_s" +
                                                            std::to_string(seed) + ".ckpt"))
                                      .string());
    }
    sink.write(cfg.out_dir, runner.warnings(), "compress");
    for (const auto& w : runner.warnings()) std::printf("warning: %s\n", w.c_str());
    return 0;
}

int cmd_sweep(ExperimentConfig cfg, const std::string& pair) {
    const std::string p = pair.empty() ? cfg.pair : pair;
    if (p.size() != 2) throw ValidationError("sweep-pair needs two stage letters, e.g. --pair DP");
    Runner runner(cfg);
    ResultSink sink;
    const auto res = sweep_pairwise(runner, stage_from_letter(p[0]), stage_from_letter(p[1]), sink);
    sink.write(cfg.out_dir, runner.warnings(), "sweep-pair " + p);
    std::vector<EdgeRow> per_seed;
    for (const auto& d : res.per_seed) {
        EdgeRow e;
        e.x = res.x;
        e.y = res.y;
        e.decision = d.comparison.decision;
        e.hv_xy = d.comparison.hv_xy;
        e.hv_yx = d.comparison.hv_yx;
        e.margin = d.comparison.margin;
        e.note = "seed " + std::to_string(d.seed);
        per_seed.push_back(e);
    }
    write_text((fs::path(cfg.out_dir) / "edges.csv").string(), edges_csv({res.majority}));
    write_text((fs::path(cfg.out_dir) / "edges_by_seed.csv").string(), edges_csv(per_seed));
    const std::string text = describe_sweep(res);
    write_text((fs::path(cfg.out_dir) / "sweep.txt").string(), text);
    std::cout << text;
    return 0;
}

int cmd_insertion(ExperimentConfig cfg, const std::string& outer, const std::string& inserted,
                  const std::string& pairwise_file) {
    const std::string o = outer.empty() ? cfg.insertion_outer : outer;
    const std::string z = inserted.empty() ? cfg.insertion_inner : inserted;
    if (o.size() != 2) throw ValidationError("validate-insertion needs an outer pair, e.g. --outer PE");
    const StageKind x = stage_from_letter(o[0]), y = stage_from_letter(o[1]);
    std::optional<EdgeDecision> pairwise;
    if (!pairwise_file.empty()) {
        for (const auto& row : parse_edges_csv(read_text(pairwise_file))) {
            if (row.x == x && row.y == y) pairwise = row.decision;
            if (row.x == y && row.y == x) {
                pairwise = row.decision == EdgeDecision::XBeforeY   ? EdgeDecision::YBeforeX
                           : row.decision == EdgeDecision::YBeforeX ? EdgeDecision::XBeforeY
                                                                    : EdgeDecision::Inconclusive;
            }
        }
        if (!pairwise) throw ValidationError("pairwise edges file has no row for " + o);
    }
    Runner runner(cfg);
    ResultSink sink;
    const auto rep = validate_insertion(runner, x, y, kind_arg(z), sink, pairwise);
    sink.write(cfg.out_dir, runner.warnings(), "validate-insertion " + o + " " + z);
    std::string text = "pairwise decision for " + o + ": " + to_string(rep.pairwise) + "\n";
    text += "with " + z + " inserted:\n" + describe_sweep(rep.with_insert);
    text += std::string("insertion ") + (rep.consistent ? "CONSISTENT" : "INCONSISTENT") + " with the pairwise decision\n";
    write_text((fs::path(cfg.out_dir) / "insertion.txt").string(), text);
    std::cout << text;
    return 0;
}

int cmd_plan(const ExperimentConfig& cfg, const std::string& edges, const std::string& from) {
    if (edges.empty() == from.empty()) throw ValidationError("plan needs exactly one of --edges or --from");
    PlanResult r;
    if (!edges.empty()) {
        r = plan(parse_edge_list(edges));
    } else {
        r = plan_from_file(from, cfg.dataset.synthetic.classes, cfg.edge_margin);
    }
    std::cout << r.text;
    return 0;
}

int cmd_repeat(ExperimentConfig cfg, const std::string& kind) {
    const std::string k = kind.empty() ? cfg.repeat_kind : kind;
    if (k.empty()) throw ValidationError("repeat-study needs --kind D, P or Q");
    cfg.allow_repeats = true;
    if (cfg.stages.empty()) cfg.stages = stages_arg(cfg, "DPQE");
    Runner runner(cfg);
    ResultSink sink;
    const auto rep = repeat_study(runner, cfg.stages, kind_arg(k), sink);
    sink.write(cfg.out_dir, runner.warnings(), "repeat-study " + k);
    const std::string text = describe_repetition(rep);
    write_text((fs::path(cfg.out_dir) / "repetition.txt").string(), text);
    std::cout << text;
    return 0;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& dir) {
    const auto files = report(dir.empty() ? cfg.out_dir : dir);
    std::cout << files.table;
    for (const auto& f : files.written) std::cout << "wrote " << f << "\n";
    return 0;
}

int cmd_cost(const ExperimentConfig& cfg, const std::string& checkpoint, double tau) {
    ModelGraph m;
    if (!checkpoint.empty()) {
        m = load_checkpoint(checkpoint);
    } else {
        m = build_model(cfg.arch, cfg.width, cfg.dataset.synthetic.classes, 0,
                        ActShape{1, cfg.dataset.synthetic.image_size, cfg.dataset.synthetic.image_size, 4});
    }
    std::printf("%s width %g, %d classes\n", m.arch.c_str(), m.width_multiplier, m.num_classes);
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i];
        const int64_t macs = count_macs(l);
        if (macs == 0) continue;
        std::printf("  layer %2zu %-7s macs %10lld  %2dw%2da\n", i, to_string(l.kind).c_str(),
                    static_cast<long long>(macs), l.weight_bits, l.act_bits);
    }
    for (size_t h = 0; h < m.exit_heads.size(); ++h) {
        std::printf("  head %zu at layer %d  bitops %lld\n", h, m.exit_heads[h].attach_index,
                    static_cast<long long>(head_bitops(m, h)));
    }
    const BaselineCost base = baseline_cost(m);
    std::printf("bitops_static %lld\nstorage_bits %lld\nfull-precision bitops %lld\n",
                static_cast<long long>(count_bitops(m)), static_cast<long long>(storage_bits(m)),
                static_cast<long long>(base.bitops));
    if (!m.exit_heads.empty()) {
        const DataSplits data = make_dataset(cfg.dataset, cfg.seeds.front());
        const ExpectedCost e = expected_bitops(m, data.test.images, tau);
        std::printf("expected_bitops at tau %g: %.1f\nexit distribution:", tau, e.bitops);
        for (double p : e.exit_distribution) std::printf(" %.4f", p);
        std::printf("\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ocmp: order compression stages on toy classifiers"};
    app.require_subcommand(1);
    GlobalFlags g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "run a single seed instead of the configured list");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--override-finetune-lr", g.finetune_lr, "fine-tune learning rate (default: base rate / 10)");

    auto* train = app.add_subcommand("train", "train the base model and save a checkpoint");
    std::string stages;
    auto* compress = app.add_subcommand("compress", "run a stage sequence and record every stage boundary");
    compress->add_option("--stages", stages, "stage letters in order, e.g. DPQE (default: config stages)");
    std::string pair;
    auto* sweep = app.add_subcommand("sweep-pair", "compare both orders of two stages over their grids");
    sweep->add_option("--pair", pair, "two stage letters, e.g. DP");
    std::string outer, inserted, pairwise_file;
    auto* insertion = app.add_subcommand("validate-insertion", "check an order survives a third stage in between");
    insertion->add_option("--outer", outer, "outer pair, e.g. PE");
    insertion->add_option("--inserted", inserted, "inserted stage letter, e.g. Q");
    insertion->add_option("--pairwise", pairwise_file, "edges file with the plain pairwise decision");
    std::string edges, from;
    auto* plan_cmd = app.add_subcommand("plan", "topologically sort precedence edges into a sequence");
    plan_cmd->add_option("--edges", edges, "explicit edges, e.g. D>P,P>Q,Q>E");
    plan_cmd->add_option("--from", from, "edges.csv or results.csv");
    std::string kind;
    auto* repeat = app.add_subcommand("repeat-study", "compare repeated stages with single stronger ones");
    repeat->add_option("--kind", kind, "stage letter to repeat (D, P or Q)");
    std::string dir;
    auto* report_cmd = app.add_subcommand("report", "threshold table and plot data for a results directory");
    report_cmd->add_option("--dir", dir, "results directory (default: --out)");
    std::string checkpoint;
    double tau = 0.9;
    auto* cost = app.add_subcommand("cost", "BitOps and storage of a checkpoint or registry model");
    cost->add_option("--checkpoint", checkpoint, "checkpoint file");
    cost->add_option("--tau", tau, "exit threshold for models with heads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const ExperimentConfig cfg = resolve(g);
        if (*train) return cmd_train(cfg);
        if (*compress) return cmd_compress(cfg, stages);
        if (*sweep) return cmd_sweep(cfg, pair);
        if (*insertion) return cmd_insertion(cfg, outer, inserted, pairwise_file);
        if (*plan_cmd) return cmd_plan(cfg, edges, from);
        if (*repeat) return cmd_repeat(cfg, kind);
        if (*report_cmd) return cmd_report(cfg, dir);
        if (*cost) return cmd_cost(cfg, checkpoint, tau);
    } catch (const PlanningError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
