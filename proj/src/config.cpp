#include "nammkit/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

#include "nammkit/spectrogram.hpp"

namespace nammkit {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_lm(const json& j, LmConfig& lm) {
    reject_unknown(j, {"vocab", "d_model", "n_heads", "n_layers", "d_ff", "max_context"}, "lm");
    get(j, "vocab", lm.vocab);
    get(j, "d_model", lm.d_model);
    get(j, "n_heads", lm.n_heads);
    get(j, "n_layers", lm.n_layers);
    get(j, "d_ff", lm.d_ff);
    get(j, "max_context", lm.max_context);
}

TaskConfig parse_task(const json& j) {
    reject_unknown(j, {"kind", "length", "key_length", "n_duplicates"}, "tasks[]");
    TaskConfig t;
    std::string kind = "passkey";
    get(j, "kind", kind);
    t.kind = task_from_name(kind);
    get(j, "length", t.length);
    get(j, "key_length", t.key_length);
    get(j, "n_duplicates", t.n_duplicates);
    return t;
}

void parse_policy(const json& j, PolicyConfig& p) {
    reject_unknown(j,
                   {"kind", "budget", "recent_window", "fastgen_threshold", "recency_ratio",
                    "attention_ratio", "threshold_offset", "average_heads", "genome", "n_up",
                    "gamma"},
                   "policy");
    get(j, "kind", p.kind);
    get(j, "budget", p.budget);
    get(j, "recent_window", p.recent_window);
    get(j, "fastgen_threshold", p.fastgen_threshold);
    get(j, "recency_ratio", p.recency_ratio);
    get(j, "attention_ratio", p.attention_ratio);
    get(j, "threshold_offset", p.threshold_offset);
    get(j, "average_heads", p.average_heads);
    get(j, "genome", p.genome_path);
    get(j, "n_up", p.n_up);
    get(j, "gamma", p.gamma);
}

void parse_evolution(const json& j, EvolutionConfig& e) {
    reject_unknown(j,
                   {"arch", "popsize", "sigma0", "elite_ratio", "batch_per_task", "eval_per_task",
                    "calib_per_task", "max_cache_fraction", "phase_generations", "phase_tasks"},
                   "evolution");
    get(j, "arch", e.arch);
    get(j, "popsize", e.popsize);
    get(j, "sigma0", e.sigma0);
    get(j, "elite_ratio", e.elite_ratio);
    get(j, "batch_per_task", e.batch_per_task);
    get(j, "eval_per_task", e.eval_per_task);
    get(j, "calib_per_task", e.calib_per_task);
    get(j, "max_cache_fraction", e.max_cache_fraction);
    get(j, "phase_generations", e.phase_generations);
    get(j, "phase_tasks", e.phase_tasks);
}

void parse_train(const json& j, TrainConfig& t) {
    reject_unknown(j,
                   {"steps", "batch_size", "lr", "lengths", "task", "key_length", "n_duplicates",
                    "log_every"},
                   "train");
    get(j, "steps", t.steps);
    get(j, "batch_size", t.batch_size);
    get(j, "lr", t.lr);
    get(j, "lengths", t.lengths);
    get(j, "task", t.task);
    get(j, "key_length", t.key_length);
    get(j, "n_duplicates", t.n_duplicates);
    get(j, "log_every", t.log_every);
}

void parse_io(const json& j, IoConfig& io) {
    reject_unknown(j, {"out_dir", "lm_checkpoint"}, "io");
    get(j, "out_dir", io.out_dir);
    get(j, "lm_checkpoint", io.lm_checkpoint);
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j,
                   {"lm", "tasks", "policy", "evolution", "train", "io", "seed", "eval_samples",
                    "workers"},
                   "top level");
    RunConfig rc;
    try {
        if (j.contains("lm")) parse_lm(j.at("lm"), rc.lm);
        if (j.contains("tasks")) {
            for (const json& t : j.at("tasks")) rc.tasks.push_back(parse_task(t));
        }
        if (j.contains("policy")) parse_policy(j.at("policy"), rc.policy);
        if (j.contains("evolution")) parse_evolution(j.at("evolution"), rc.evolution);
        if (j.contains("train")) parse_train(j.at("train"), rc.train);
        if (j.contains("io")) parse_io(j.at("io"), rc.io);
        get(j, "seed", rc.seed);
        get(j, "eval_samples", rc.eval_samples);
        get(j, "workers", rc.workers);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config value error: ") + e.what());
    }
    rc.lm.validate();
    if (rc.policy.n_up % kStride != 0 || rc.policy.n_up < kWindowSize) {
        throw ConfigError("policy.n_up must be a multiple of 16 and at least 32");
    }
    if (rc.evolution.phase_generations.size() != rc.evolution.phase_tasks.size()) {
        throw ConfigError("evolution.phase_generations and phase_tasks lengths differ");
    }
    return rc;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

EvictionPolicy build_policy(const PolicyConfig& pc) {
    EvictionPolicy p;
    if (pc.kind == "full") {
        p.kind = PolicyKind::Full;
    } else if (pc.kind == "recency") {
        p.kind = PolicyKind::Recency;
    } else if (pc.kind == "l2") {
        p.kind = PolicyKind::L2;
    } else if (pc.kind == "h2o") {
        p.kind = PolicyKind::H2O;
    } else if (pc.kind == "fastgen") {
        p.kind = PolicyKind::FastGenLite;
    } else if (pc.kind == "namm") {
        p.kind = PolicyKind::Namm;
        if (!pc.genome_path.empty()) p.namm = load_genome(pc.genome_path);
        p.namm.threshold_offset += pc.threshold_offset;
    } else {
        throw ConfigError("unknown policy kind: " + pc.kind);
    }
    p.budget = pc.budget;
    p.recent_window = pc.recent_window;
    p.fastgen_threshold = pc.fastgen_threshold;
    p.recency_ratio = pc.recency_ratio;
    p.attention_ratio = pc.attention_ratio;
    p.average_heads = pc.average_heads;
    return p;
}

EvolveConfig build_evolve_config(const RunConfig& rc) {
    EvolveConfig ec;
    if (rc.evolution.arch == "bam") {
        ec.arch = ArchId::Bam;
    } else if (rc.evolution.arch == "mlp") {
        ec.arch = ArchId::Mlp;
    } else {
        throw ConfigError("unknown arch: " + rc.evolution.arch);
    }
    auto task_by_name = [&](const std::string& name) {
        const TaskKind kind = task_from_name(name);
        for (const TaskConfig& t : rc.tasks) {
            if (t.kind == kind) return t;
        }
        TaskConfig t;
        t.kind = kind;
        return t;
    };
    if (rc.evolution.phase_tasks.empty()) {
        // Default schedule: one phase over the configured task list.
        PhaseSpec ps;
        ps.tasks = rc.tasks.empty() ? std::vector<TaskConfig>{TaskConfig{}} : rc.tasks;
        ps.generations = 10;
        ec.phases.push_back(ps);
    } else {
        for (std::size_t p = 0; p < rc.evolution.phase_tasks.size(); ++p) {
            PhaseSpec ps;
            for (const std::string& name : rc.evolution.phase_tasks[p]) {
                ps.tasks.push_back(task_by_name(name));
            }
            ps.generations = rc.evolution.phase_generations[p];
            ec.phases.push_back(ps);
        }
    }
    ec.popsize = rc.evolution.popsize;
    ec.sigma0 = rc.evolution.sigma0;
    ec.elite_ratio = rc.evolution.elite_ratio;
    ec.batch_per_task = rc.evolution.batch_per_task;
    ec.eval_per_task = rc.evolution.eval_per_task;
    ec.calib_per_task = rc.evolution.calib_per_task;
    ec.max_cache_fraction = rc.evolution.max_cache_fraction;
    ec.n_up = rc.policy.n_up;
    ec.gamma = rc.policy.gamma;
    ec.threshold_offset = rc.policy.threshold_offset;
    ec.seed = rc.seed;
    ec.out_dir = rc.io.out_dir;
    return ec;
}

}  // namespace nammkit
