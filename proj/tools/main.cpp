#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nammkit/analysis.hpp"
#include "nammkit/binio.hpp"
#include "nammkit/config.hpp"
#include "nammkit/engine.hpp"
#include "nammkit/eval.hpp"
#include "nammkit/evolve.hpp"
#include "nammkit/parallel.hpp"
#include "nammkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace nammkit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitFormat = 4;

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::size_t workers = 0;
};

void add_common(CLI::App* cmd, CommonArgs* a) {
    cmd->add_option("--config", a->config_path, "JSON run configuration");
    cmd->add_option("--seed", a->seed, "Override the config seed")->each([a](const std::string&) {
        a->seed_set = true;
    });
    cmd->add_option("--out", a->out_dir, "Output directory override");
    cmd->add_option("--workers", a->workers, "Worker threads (0 = auto)");
}

RunConfig resolve(const CommonArgs& a) {
    RunConfig rc = a.config_path.empty() ? RunConfig{} : load_config(a.config_path);
    if (a.seed_set) rc.seed = a.seed;
    if (!a.out_dir.empty()) rc.io.out_dir = a.out_dir;
    if (a.workers != 0) rc.workers = a.workers;
    if (rc.workers == 0) rc.workers = default_workers();
    return rc;
}

int cmd_train_lm(const CommonArgs& args) {
    const RunConfig rc = resolve(args);
    TrainerConfig tc;
    tc.lm = rc.lm;
    tc.task = task_from_name(rc.train.task);
    tc.lengths = rc.train.lengths;
    tc.key_length = rc.train.key_length;
    tc.n_duplicates = rc.train.n_duplicates;
    tc.steps = rc.train.steps;
    tc.batch_size = rc.train.batch_size;
    tc.lr = rc.train.lr;
    tc.eval_every = rc.train.log_every;
    tc.eval_samples = rc.eval_samples;
    tc.seed = rc.seed;
    tc.workers = rc.workers;

    fs::create_directories(rc.io.out_dir);
    std::ofstream log(fs::path(rc.io.out_dir) / "train_log.txt");
    log << "initial loss for uniform logits: ln(vocab) = " << std::log(double(rc.lm.vocab))
        << "\n";
    TrainOutcome out;
    try {
        out = train_lm(tc, &log);
    } catch (const std::runtime_error& e) {
        log << "diverged: " << e.what() << "\n";
        std::cerr << "train-lm: " << e.what() << "\n";
        return kExitDiverged;
    }
    const std::string ckpt = (fs::path(rc.io.out_dir) / "lm.bin").string();
    save_lm(out.weights, ckpt);
    log << "final: steps " << out.steps_run << " loss " << out.final_loss << " heldout_em "
        << out.final_exact_match << "\n";
    std::cout << "wrote " << ckpt << " (heldout_em " << out.final_exact_match << ")\n";
    return 0;
}

int cmd_evolve(const CommonArgs& args, const std::string& lm_path) {
    const RunConfig rc = resolve(args);
    const std::string ckpt = lm_path.empty() ? rc.io.lm_checkpoint : lm_path;
    if (ckpt.empty()) {
        std::cerr << "evolve: --lm or io.lm_checkpoint required\n";
        return kExitConfig;
    }
    const LmWeights lm = load_lm(ckpt);
    EvolveConfig ec = build_evolve_config(rc);
    ec.workers = rc.workers;
    const EvolveOutcome out = run_evolution(lm, ec);
    std::cout << "best normalized score " << out.best_score << " cache fraction "
              << out.best_cache_fraction << "\n";
    std::cout << "artifacts in " << ec.out_dir << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& lm_path, const std::string& policy_name,
             const std::string& genome_path, std::size_t budget, double threshold_offset,
             const std::string& trace_path) {
    RunConfig rc = resolve(args);
    if (!policy_name.empty()) rc.policy.kind = policy_name;
    if (!genome_path.empty()) rc.policy.genome_path = genome_path;
    if (budget != 0) rc.policy.budget = budget;
    rc.policy.threshold_offset += threshold_offset;
    const std::string ckpt = lm_path.empty() ? rc.io.lm_checkpoint : lm_path;
    if (ckpt.empty()) {
        std::cerr << "eval: --lm or io.lm_checkpoint required\n";
        return kExitConfig;
    }
    const LmWeights lm = load_lm(ckpt);
    const EvictionPolicy policy = build_policy(rc.policy);
    if (rc.tasks.empty()) rc.tasks.push_back(TaskConfig{});

    EvalConfig ec;
    ec.n_up = rc.policy.n_up;
    ec.gamma = rc.policy.gamma;
    ec.workers = rc.workers;

    fs::create_directories(rc.io.out_dir);
    std::ofstream results(fs::path(rc.io.out_dir) / "results.csv");
    results << "task,raw_score,normalized_score,mean_cache_tokens,mean_cache_fraction\n";
    std::ofstream records(fs::path(rc.io.out_dir) / "records.csv");
    records << "task,sample,layer,head,retained,appended,mean_oldness,prompt_length\n";

    for (const TaskConfig& task : rc.tasks) {
        // One ATRC stream per sample; with several tasks the task name keeps
        // the streams apart.
        ec.trace_path = trace_path.empty()
                            ? ""
                            : (rc.tasks.size() > 1 ? trace_path + "." + task_name(task.kind)
                                                   : trace_path);
        const auto samples = make_eval_set(task, rc.eval_samples, rc.seed, kEvalNamespace);
        const TaskEvalResult base = evaluate_policy(lm, EvictionPolicy{}, samples, ec);
        const TaskEvalResult run = policy.kind == PolicyKind::Full
                                       ? base
                                       : evaluate_policy(lm, policy, samples, ec);
        const double normalized = run.mean_score / std::max(base.mean_score, 1e-6);
        double mean_tokens = 0.0;
        for (const SampleEval& s : run.samples) {
            double tokens = 0.0;
            for (const HeadStats& hs : s.stats.per_head) tokens += double(hs.retained);
            mean_tokens += tokens / std::max<std::size_t>(1, s.stats.per_head.size());
        }
        mean_tokens /= std::max<std::size_t>(1, run.samples.size());
        results << task_name(task.kind) << "," << run.mean_score << "," << normalized << ","
                << mean_tokens << "," << run.mean_cache_fraction << "\n";
        for (std::size_t i = 0; i < run.samples.size(); ++i) {
            for (const HeadStats& hs : run.samples[i].stats.per_head) {
                records << task_name(task.kind) << "," << i << "," << hs.layer << "," << hs.head
                        << "," << hs.retained << "," << hs.appended << "," << hs.mean_oldness
                        << "," << samples[i].answer_start << "\n";
            }
        }
        std::cout << task_name(task.kind) << ": raw " << run.mean_score << " normalized "
                  << normalized << " cache_fraction " << run.mean_cache_fraction << "\n";
    }
    return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& genome_path,
               const std::string& out_dir, double gamma) {
    GenomePackage pkg;
    if (!genome_path.empty()) {
        pkg = load_genome(genome_path);
    } else {
        pkg.genome.arch = ArchId::Bam;
        pkg.genome.params.assign(param_count(ArchId::Bam), 0.0);
    }
    TraceReader reader(trace_path);
    const ReplayResult res = replay_trace(reader, pkg, gamma);

    fs::create_directories(out_dir);
    std::ofstream report(fs::path(out_dir) / "replay.csv");
    report << "layer,head,step,n_scores,n_retained,min_score,max_score\n";
    for (const ReplayEvent& ev : res.events) {
        double lo = 0.0, hi = 0.0;
        if (!ev.scores.empty()) {
            lo = hi = ev.scores[0];
            for (double s : ev.scores) {
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
        }
        report << ev.layer << "," << ev.head << "," << ev.step << "," << ev.scores.size() << ","
               << ev.retained_positions.size() << "," << lo << "," << hi << "\n";
    }
    // 32-bin score histogram over every score the replay produced
    std::ofstream hist(fs::path(out_dir) / "score_histogram.csv");
    hist << "bin_low,bin_high,count\n";
    if (!res.all_scores.empty()) {
        double lo = res.all_scores[0], hi = res.all_scores[0];
        for (double s : res.all_scores) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        if (hi <= lo) hi = lo + 1.0;
        std::vector<std::size_t> bins(32, 0);
        for (double s : res.all_scores) {
            auto b = static_cast<std::size_t>((s - lo) / (hi - lo) * 32.0);
            bins[std::min<std::size_t>(b, 31)]++;
        }
        for (std::size_t b = 0; b < bins.size(); ++b) {
            const double w = (hi - lo) / 32.0;
            hist << lo + double(b) * w << "," << lo + double(b + 1) * w << "," << bins[b] << "\n";
        }
    }
    std::cout << "replayed " << res.events.size() << " records, " << res.all_scores.size()
              << " scores -> " << out_dir << "\n";
    return 0;
}

int cmd_analyze(const std::string& run_dir, const std::string& genome_path, std::uint64_t seed) {
    const fs::path records_path = fs::path(run_dir) / "records.csv";
    std::vector<std::string> missing;
    if (!fs::exists(records_path)) missing.push_back(records_path.string());
    if (!missing.empty()) {
        std::cerr << "analyze: missing artifacts:\n";
        for (const std::string& m : missing) std::cerr << "  " << m << "\n";
        return kExitConfig;
    }

    std::ifstream is(records_path);
    std::string line;
    std::getline(is, line);
    if (line != "task,sample,layer,head,retained,appended,mean_oldness,prompt_length") {
        std::cerr << "analyze: unrecognized records.csv header\n";
        return kExitFormat;
    }
    std::vector<RunRecord> recs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        RunRecord r;
        std::string field;
        std::getline(ls, r.task, ',');
        std::getline(ls, field, ',');
        r.sample = std::stoul(field);
        std::getline(ls, field, ',');
        r.layer = std::stoul(field);
        std::getline(ls, field, ',');
        r.head = std::stoul(field);
        std::getline(ls, field, ',');
        r.retained = std::stoul(field);
        std::getline(ls, field, ',');
        r.appended = std::stoul(field);
        std::getline(ls, field, ',');
        r.mean_oldness = std::stod(field);
        std::getline(ls, field, ',');
        r.prompt_length = std::stoul(field);
        recs.push_back(r);
    }

    const LayerTaskProfile profile = layer_task_profile(recs);
    std::ofstream out(fs::path(run_dir) / "profile.csv");
    out << "task,layer,norm_size,norm_oldness\n";
    for (const ProfileRow& row : profile.rows) {
        out << row.task << "," << row.layer << "," << row.norm_size << "," << row.norm_oldness
            << "\n";
    }
    std::cout << "size/length correlation: " << profile.size_length_correlation << "\n";

    if (!genome_path.empty()) {
        const GenomePackage pkg = load_genome(genome_path);
        RngState rng = derive_rng(seed, 0x5E);
        Matrix feats(8, kFeatureDim);
        for (double& v : feats.data) v = rng_next_normal(rng);
        const SensitivityReport rep = score_sensitivity(pkg.genome, feats);
        std::ofstream sens(fs::path(run_dir) / "sensitivity.csv");
        sens << "token,feature,abs_self_grad,directional\n";
        for (std::size_t i = 0; i < rep.self_abs.rows; ++i) {
            for (std::size_t k = 0; k < rep.self_abs.cols; ++k) {
                sens << i << "," << k << "," << rep.self_abs.at(i, k) << ","
                     << rep.directional[i] << "\n";
            }
        }
        std::ofstream grid(fs::path(run_dir) / "cross_token.csv");
        grid << "i,j,sq_grad_norm\n";
        for (std::size_t i = 0; i < rep.cross.rows; ++i) {
            for (std::size_t j = 0; j < rep.cross.cols; ++j) {
                grid << i << "," << j << "," << rep.cross.at(i, j) << "\n";
            }
        }
    }
    std::cout << "analysis written to " << run_dir << "\n";
    return 0;
}

int cmd_gen_tasks(const std::string& task, std::size_t n, std::size_t length,
                  std::size_t key_length, std::size_t n_duplicates, std::uint64_t seed,
                  bool train_split) {
    TaskConfig tc;
    tc.kind = task_from_name(task);
    tc.length = length;
    tc.key_length = key_length;
    tc.n_duplicates = n_duplicates;
    const auto set = make_eval_set(tc, n, seed, train_split ? kTrainNamespace : kEvalNamespace);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const PromptSample& s = set[i];
        std::cout << task_name(s.task) << " " << seed << " ";
        for (std::size_t t = 0; t < s.tokens.size(); ++t) {
            if (t) std::cout << ' ';
            std::cout << s.tokens[t];
        }
        std::cout << " | " << s.answer_start << " " << s.answer_end << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KV-cache eviction toolkit: toy LM, learned eviction, baselines"};
    app.require_subcommand(1);

    CommonArgs train_args, evolve_args, eval_args;
    std::string evolve_lm, eval_lm, eval_policy, eval_genome;
    std::size_t eval_budget = 0;
    double eval_offset = 0.0;

    CLI::App* train = app.add_subcommand("train-lm", "Train the toy language model");
    add_common(train, &train_args);

    CLI::App* evolve = app.add_subcommand("evolve", "Evolve an eviction scorer on a frozen LM");
    add_common(evolve, &evolve_args);
    evolve->add_option("--lm", evolve_lm, "LM checkpoint path");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a policy on held-out prompts");
    add_common(eval, &eval_args);
    eval->add_option("--lm", eval_lm, "LM checkpoint path");
    eval->add_option("--policy", eval_policy, "full|recency|l2|h2o|fastgen|namm");
    eval->add_option("--genome", eval_genome, "Scorer genome file");
    eval->add_option("--budget", eval_budget, "Budget for l2/h2o/recency");
    eval->add_option("--threshold-offset", eval_offset, "Added to the score threshold");
    std::string eval_trace;
    eval->add_option("--trace", eval_trace, "Export attention traces to PATH.<sample>");

    std::string replay_trace_path, replay_genome, replay_out = "out";
    double replay_gamma = 0.0;
    CLI::App* replay = app.add_subcommand("replay", "Apply a scorer to a recorded trace");
    replay->add_option("--trace", replay_trace_path, "ATRC trace file")->required();
    replay->add_option("--genome", replay_genome, "Scorer genome file");
    replay->add_option("--out", replay_out, "Output directory");
    replay->add_option("--gamma", replay_gamma, "EMA coefficient (0 = default)");

    std::string analyze_dir, analyze_genome;
    std::uint64_t analyze_seed = 0;
    CLI::App* analyze = app.add_subcommand("analyze", "Profile a finished eval run");
    analyze->add_option("--run-dir", analyze_dir, "Directory with eval artifacts")->required();
    analyze->add_option("--genome", analyze_genome, "Genome for sensitivity analysis");
    analyze->add_option("--seed", analyze_seed, "Seed for sensitivity probes");

    std::string gt_task = "passkey";
    std::size_t gt_n = 8, gt_length = 256, gt_key = 4, gt_dups = 3;
    std::uint64_t gt_seed = 0;
    bool gt_train = false;
    CLI::App* gen = app.add_subcommand("gen-tasks", "Emit synthetic prompts");
    gen->add_option("--task", gt_task, "passkey|dedup_qa|copy_distractor");
    gen->add_option("--n", gt_n, "Number of samples");
    gen->add_option("--length", gt_length, "Prompt length");
    gen->add_option("--key-length", gt_key, "Key/span length");
    gen->add_option("--n-duplicates", gt_dups, "Duplicate count (dedup_qa)");
    gen->add_option("--seed", gt_seed, "Seed");
    gen->add_flag("--train-split", gt_train, "Draw from the training seed namespace");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train_lm(train_args);
        if (evolve->parsed()) return cmd_evolve(evolve_args, evolve_lm);
        if (eval->parsed()) {
            return cmd_eval(eval_args, eval_lm, eval_policy, eval_genome, eval_budget,
                            eval_offset, eval_trace);
        }
        if (replay->parsed()) {
            return cmd_replay(replay_trace_path, replay_genome, replay_out, replay_gamma);
        }
        if (analyze->parsed()) return cmd_analyze(analyze_dir, analyze_genome, analyze_seed);
        if (gen->parsed()) {
            return cmd_gen_tasks(gt_task, gt_n, gt_length, gt_key, gt_dups, gt_seed, gt_train);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
