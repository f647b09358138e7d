#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "regulargpt/analysis.hpp"
#include "regulargpt/automata.hpp"
#include "regulargpt/checkpoint.hpp"
#include "regulargpt/lemma.hpp"
#include "regulargpt/train.hpp"

using nlohmann::json;
using namespace regulargpt;

namespace {

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

uint32_t file_crc32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read artifact " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return crc32(bytes.data(), bytes.size());
}

// REGULARGPT_OUT wins over the flag so wrappers can redirect a whole run.
std::string resolve_out(const std::string& flag_out) {
    if (const char* env = std::getenv("REGULARGPT_OUT"); env && *env) return env;
    return flag_out.empty() ? "." : flag_out;
}

struct ManifestWriter {
    json m;
    std::string dir;
    ManifestWriter(const std::string& out_dir, const std::string& command, const json& config,
                   uint64_t seed)
        : dir(out_dir) {
        m["command"] = command;
        m["config"] = config;
        m["seed"] = seed;
        m["started"] = now_iso8601();
        m["artifacts"] = json::array();
    }
    void add(const std::string& path) {
        m["artifacts"].push_back({{"path", path}, {"crc32", file_crc32(path)}});
    }
    void finish() {
        m["finished"] = now_iso8601();
        std::string tmp = dir + "/manifest.json.tmp";
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << m.dump(2) << "\n";
        out.close();
        if (std::rename(tmp.c_str(), (dir + "/manifest.json").c_str()) != 0)
            throw std::runtime_error("cannot move manifest into place");
    }
};

struct LengthRange {
    int64_t from = 41, to = 500, step = 9;
};

LengthRange parse_lengths(const std::string& s) {
    LengthRange r;
    if (std::sscanf(s.c_str(), "%ld:%ld:%ld", &r.from, &r.to, &r.step) != 3)
        throw std::invalid_argument("lengths must be FROM:TO:STEP, got '" + s + "'");
    return r;
}

// flags override config-file values; the resolved merge is echoed into the manifest
struct TrainArgs {
    std::string config_path, task = "parity", kind = "regular", out;
    int64_t C = 2, K = 1, d_model = 64, n_heads = 4, d_ffn = 256;
    int64_t vanilla_layers = 4, rel_buckets = 32;
    double lr = 3e-4, p1 = 0.5, early_stop = 0.999;
    int64_t batch = 64, steps = 20000, t_tr = 40, patience = 10, log_every = 100;
    uint64_t seed = 0;
};

json train_args_to_json(const TrainArgs& a) {
    return {{"task", a.task},       {"kind", a.kind},
            {"C", a.C},             {"K", a.K},
            {"dModel", a.d_model},  {"nHeads", a.n_heads},
            {"dFFN", a.d_ffn},      {"vanillaLayers", a.vanilla_layers},
            {"relBuckets", a.rel_buckets},
            {"lr", a.lr},           {"p1", a.p1},
            {"earlyStop", a.early_stop},
            {"batch", a.batch},     {"steps", a.steps},
            {"tTr", a.t_tr},        {"patience", a.patience},
            {"logEvery", a.log_every},
            {"seed", a.seed}};
}

void merge_config_file(TrainArgs& a, const CLI::App* cmd) {
    std::ifstream in(a.config_path);
    if (!in) throw std::invalid_argument("cannot open config file " + a.config_path);
    json j = json::parse(in);
    auto take = [&](const char* key, const char* flag, auto& field) {
        if (j.contains(key) && cmd->count(flag) == 0) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("task", "--task", a.task);
    take("kind", "--kind", a.kind);
    take("C", "--C", a.C);
    take("K", "--K", a.K);
    take("dModel", "--d-model", a.d_model);
    take("nHeads", "--n-heads", a.n_heads);
    take("dFFN", "--d-ffn", a.d_ffn);
    take("vanillaLayers", "--vanilla-layers", a.vanilla_layers);
    take("relBuckets", "--rel-buckets", a.rel_buckets);
    take("lr", "--lr", a.lr);
    take("p1", "--p1", a.p1);
    take("earlyStop", "--early-stop", a.early_stop);
    take("batch", "--batch", a.batch);
    take("steps", "--steps", a.steps);
    take("tTr", "--t-tr", a.t_tr);
    take("patience", "--patience", a.patience);
    take("logEvery", "--log-every", a.log_every);
    take("seed", "--seed", a.seed);
}

int cmd_train(const TrainArgs& a) {
    TaskSpec task = make_task(a.task);
    TrainConfig cfg;
    cfg.task = a.task;
    cfg.model.chunk = a.C;
    cfg.model.thickness = a.K;
    cfg.model.d_model = a.d_model;
    cfg.model.n_heads = a.n_heads;
    cfg.model.d_ffn = a.d_ffn;
    cfg.model.kind = a.kind;
    cfg.model.vanilla_layers = a.vanilla_layers;
    cfg.model.rel_buckets = a.rel_buckets;
    cfg.model.vocab_size = static_cast<int64_t>(task.vocab.size());
    cfg.model.pad_symbol = task.pad_symbol;
    cfg.lr = a.lr;
    cfg.p1 = a.p1;
    cfg.early_stop = a.early_stop;
    cfg.batch_size = a.batch;
    cfg.max_steps = a.steps;
    cfg.t_tr = a.t_tr;
    cfg.early_stop_patience = a.patience;
    cfg.log_every = a.log_every;
    cfg.seed = a.seed;
    cfg.model.validate();
    cfg.validate();

    std::string out = resolve_out(a.out);
    ManifestWriter manifest(out, "train", train_args_to_json(a), a.seed);

    Model<float> model(cfg.model, a.seed);
    TrainResult res = train(model, task, cfg, [](const LogPoint& lp) {
        std::printf("step %ld loss %.4f acc %.4f\n", (long)lp.step, lp.loss, lp.train_acc);
        std::fflush(stdout);
    });

    std::ofstream csv(out + "/curves.csv");
    csv << "step,loss,train_acc\n";
    for (const LogPoint& lp : res.curve)
        csv << lp.step << "," << lp.loss << "," << lp.train_acc << "\n";
    csv.close();
    manifest.add(out + "/curves.csv");

    if (res.diverged) {
        std::printf("diverged at step %ld\n", (long)res.diverged_step);
        manifest.m["diverged_step"] = res.diverged_step;
        manifest.finish();
        return 2;
    }

    CheckpointMeta meta{a.task, a.seed, res.steps_run};
    save_checkpoint(model, meta, out + "/checkpoint");
    manifest.add(out + "/checkpoint.json");
    manifest.add(out + "/checkpoint.bin");
    manifest.m["steps_run"] = res.steps_run;
    manifest.m["final_train_acc"] = res.final_train_acc;
    manifest.finish();
    std::printf("final_train_acc=%.4f\n", res.final_train_acc);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& lengths, int64_t n, double p1,
             uint64_t seed, const std::string& out_flag) {
    LengthRange r = parse_lengths(lengths);
    auto [model, meta] = load_checkpoint<float>(ckpt);
    TaskSpec task = make_task(meta.task);
    EvalReport rep = evaluate(model, task, r.from, r.to, r.step, n, p1, seed);

    std::string out = resolve_out(out_flag);
    json cfg = {{"checkpoint", ckpt}, {"lengths", lengths}, {"n", n}, {"p1", p1}, {"task", meta.task}};
    ManifestWriter manifest(out, "eval", cfg, seed);
    std::ofstream csv(out + "/eval.csv");
    csv << "length,accuracy\n";
    for (auto& [len, acc] : rep.per_length) csv << len << "," << acc << "\n";
    csv.close();
    manifest.add(out + "/eval.csv");
    manifest.m["average"] = rep.average;
    manifest.finish();

    std::printf("p1=%.2f\n", rep.p1);
    std::printf("avg_accuracy=%.4f\n", rep.average);
    return 0;
}

int cmd_analyze_cluster(const std::string& ckpt, const std::string& task_name, int64_t T, int64_t k,
                        uint64_t seed, const std::string& out_flag) {
    auto [model, meta] = load_checkpoint<float>(ckpt);
    if (!task_name.empty() && task_name != meta.task)
        throw std::invalid_argument("checkpoint was trained on task '" + meta.task +
                                    "', not '" + task_name + "'");
    TaskSpec task = make_task(meta.task);
    Rng rng = Rng(seed).fork(5);
    Sample s = sample(task, T, rng);
    LayerOutputDump dump = collect_outputs(model, task, s.tokens);

    std::vector<std::vector<double>> vecs;
    std::vector<std::string> labels;
    for (const OutputRecord& rec : dump.records) {
        vecs.push_back(rec.vec);
        labels.push_back(rec.label);
    }
    std::set<std::string> distinct(labels.begin(), labels.end());
    if (k <= 0) k = static_cast<int64_t>(distinct.size());

    PcaResult pca = pca_2d(vecs);
    KmeansResult km = kmeans_2d(pca.projections, k, /*restarts=*/20, seed);
    std::vector<int64_t> label_ids;
    std::vector<std::string> order(distinct.begin(), distinct.end());
    for (const std::string& l : labels)
        label_ids.push_back(std::find(order.begin(), order.end(), l) - order.begin());
    double p = purity(km.assignment, label_ids, k);

    std::string out = resolve_out(out_flag);
    json cfg = {{"checkpoint", ckpt}, {"task", meta.task}, {"T", T}, {"k", k}};
    ManifestWriter manifest(out, "analyze cluster", cfg, seed);
    std::ofstream csv(out + "/cluster.csv");
    csv << "i,l,pc1,pc2,label\n";
    for (size_t i = 0; i < dump.records.size(); ++i)
        csv << dump.records[i].position << "," << dump.records[i].level << ","
            << pca.projections[i][0] << "," << pca.projections[i][1] << "," << labels[i] << "\n";
    csv.close();
    manifest.add(out + "/cluster.csv");
    manifest.m["purity"] = p;
    manifest.m["distinct_labels"] = distinct.size();
    if (dump.general_chunk_span) manifest.m["general_chunk_span"] = true;
    manifest.finish();

    if (dump.general_chunk_span)
        std::printf("note: span labels use the general-C extrapolation\n");
    std::printf("distinct_labels=%zu\n", distinct.size());
    std::printf("purity=%.4f\n", p);
    return 0;
}

int cmd_analyze_receptive(const std::string& ckpt, int64_t T, uint64_t seed,
                          const std::string& out_flag) {
    auto [model, meta] = load_checkpoint<float>(ckpt);
    TaskSpec task = make_task(meta.task);
    Rng rng = Rng(seed).fork(5);
    Sample s = sample(task, T, rng);
    ReceptiveProfile prof = receptive_field(model, task, s.tokens);

    std::string out = resolve_out(out_flag);
    json cfg = {{"checkpoint", ckpt}, {"task", meta.task}, {"T", T}};
    ManifestWriter manifest(out, "analyze receptive", cfg, seed);
    std::ofstream csv(out + "/receptive.csv");
    csv << "position,grad_norm,cumulative\n";
    for (size_t j = 0; j < prof.grad_norm.size(); ++j)
        csv << j << "," << prof.grad_norm[j] << "," << prof.cumulative[j] << "\n";
    csv.close();
    manifest.add(out + "/receptive.csv");
    manifest.finish();
    std::printf("total_grad_mass=%.6f\n", prof.total);
    return 0;
}

int cmd_analyze_routing(int64_t C, int64_t T) {
    if (C < 2) throw std::invalid_argument("routing: C must be >= 2");
    if (T < 1) throw std::invalid_argument("routing: T must be >= 1");
    std::printf("reachable=%ld\n", (long)routing_coverage(C, T));
    return 0;
}

int cmd_analyze_cost(int64_t C, int64_t T, int64_t K, int64_t vanilla_L) {
    int64_t groups = adaptive_depth(T, C);
    int64_t model_cost = attention_cost(C, K, T, groups);
    int64_t base_cost = vanilla_cost(T, vanilla_L);
    std::printf("model_cost=%ld\n", (long)model_cost);
    std::printf("vanilla_cost=%ld\n", (long)base_cost);
    std::printf("ratio=%.4f\n", double(base_cost) / double(model_cost));
    return 0;
}

int cmd_lemma_verify(int64_t n, const std::string& mode, int64_t trials, uint64_t seed,
                     bool force) {
    bool exhaustive = mode == "exhaustive";
    if (!exhaustive && mode != "random")
        throw std::invalid_argument("lemma verify: mode must be exhaustive or random");
    if (exhaustive && n > 3 && !force)
        throw std::invalid_argument("lemma verify: exhaustive n > 3 enumerates 2^(2n^2) pairs; "
                                    "pass --force to insist");
    LemmaReport rep = exhaustive ? verify_lemma(n, true, 0, seed)
                                 : verify_lemma(n, false, trials, seed);
    if (rep.pass) {
        std::printf("pass %ld/%ld\n", (long)rep.trials, (long)rep.trials);
        return 0;
    }
    std::printf("fail: %s\n", rep.counterexample.c_str());
    return 2;
}

int cmd_lemma_print(int64_t n) {
    std::vector<int> w1 = build_W1(n);
    std::vector<int> w2 = build_W2(n);
    std::printf("W1 (%ldx%ld):\n", (long)(2 * n * n), (long)(n * n * n));
    std::printf("%s\n", format_matrix(w1, 2 * n * n, n * n * n).c_str());
    std::printf("W2 (%ldx%ld):\n", (long)(n * n * n), (long)(n * n));
    std::printf("%s\n", format_matrix(w2, n * n * n, n * n).c_str());
    return 0;
}

int cmd_sample(const std::string& task_name, int64_t length, int64_t n, double p1, uint64_t seed) {
    TaskSpec task = make_task(task_name);
    Rng rng = Rng(seed).fork(1);
    for (int64_t i = 0; i < n; ++i) {
        Sample s = sample(task, length, rng, p1);
        std::printf("%s\n", format_sample(task, s).c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"regular-language transformer: training, evaluation, and analysis"};
    app.require_subcommand(1);

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    train_cmd->add_option("--config", ta.config_path, "JSON config file; flags override its values");
    train_cmd->add_option("--task", ta.task);
    train_cmd->add_option("--kind", ta.kind)->check(CLI::IsMember({"regular", "vanilla"}));
    train_cmd->add_option("--C", ta.C);
    train_cmd->add_option("--K", ta.K);
    train_cmd->add_option("--d-model", ta.d_model);
    train_cmd->add_option("--n-heads", ta.n_heads);
    train_cmd->add_option("--d-ffn", ta.d_ffn);
    train_cmd->add_option("--vanilla-layers", ta.vanilla_layers);
    train_cmd->add_option("--rel-buckets", ta.rel_buckets);
    train_cmd->add_option("--lr", ta.lr);
    train_cmd->add_option("--p1", ta.p1);
    train_cmd->add_option("--early-stop", ta.early_stop);
    train_cmd->add_option("--batch", ta.batch);
    train_cmd->add_option("--steps", ta.steps);
    train_cmd->add_option("--t-tr", ta.t_tr);
    train_cmd->add_option("--patience", ta.patience);
    train_cmd->add_option("--log-every", ta.log_every);
    train_cmd->add_option("--seed", ta.seed);
    train_cmd->add_option("--out", ta.out, "output directory (REGULARGPT_OUT overrides)");

    std::string ev_ckpt, ev_lengths = "41:500:9", ev_out;
    int64_t ev_n = 100;
    double ev_p1 = 0.5;
    uint64_t ev_seed = 0;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over a length grid");
    eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
    eval_cmd->add_option("--lengths", ev_lengths, "FROM:TO:STEP");
    eval_cmd->add_option("--n", ev_n, "samples per length");
    eval_cmd->add_option("--p1", ev_p1);
    eval_cmd->add_option("--seed", ev_seed);
    eval_cmd->add_option("--out", ev_out);

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "model and cost instruments");
    analyze_cmd->require_subcommand(1);
    std::string cl_ckpt, cl_task, cl_out;
    int64_t cl_T = 500, cl_k = 0;
    uint64_t cl_seed = 0;
    CLI::App* cluster_cmd = analyze_cmd->add_subcommand("cluster", "layer-output clustering purity");
    cluster_cmd->add_option("--checkpoint", cl_ckpt)->required();
    cluster_cmd->add_option("--task", cl_task, "must match the checkpoint's task");
    cluster_cmd->add_option("--T", cl_T);
    cluster_cmd->add_option("--k", cl_k, "cluster count; defaults to distinct span labels");
    cluster_cmd->add_option("--seed", cl_seed);
    cluster_cmd->add_option("--out", cl_out);

    std::string rf_ckpt, rf_out;
    int64_t rf_T = 100;
    uint64_t rf_seed = 0;
    CLI::App* receptive_cmd = analyze_cmd->add_subcommand("receptive", "gradient receptive field");
    receptive_cmd->add_option("--checkpoint", rf_ckpt)->required();
    receptive_cmd->add_option("--T", rf_T);
    receptive_cmd->add_option("--seed", rf_seed);
    receptive_cmd->add_option("--out", rf_out);

    int64_t rt_C = 2, rt_T = 8;
    CLI::App* routing_cmd = analyze_cmd->add_subcommand("routing", "reachable-set size");
    routing_cmd->add_option("--C", rt_C);
    routing_cmd->add_option("--T", rt_T);

    int64_t co_C = 2, co_T = 512, co_K = 1, co_vL = 4;
    CLI::App* cost_cmd = analyze_cmd->add_subcommand("cost", "finite-bias-entry counts");
    cost_cmd->add_option("--C", co_C);
    cost_cmd->add_option("--T", co_T);
    cost_cmd->add_option("--K", co_K);
    cost_cmd->add_option("--vanilla-L", co_vL);

    CLI::App* lemma_cmd = app.add_subcommand("lemma", "binary-matmul MLP construction");
    lemma_cmd->require_subcommand(1);
    int64_t lv_n = 2, lv_trials = 10000;
    std::string lv_mode = "exhaustive";
    uint64_t lv_seed = 0;
    bool lv_force = false;
    CLI::App* verify_cmd = lemma_cmd->add_subcommand("verify", "check against the direct product");
    verify_cmd->add_option("--n", lv_n);
    verify_cmd->add_option("--mode", lv_mode)->check(CLI::IsMember({"exhaustive", "random"}));
    verify_cmd->add_option("--trials", lv_trials);
    verify_cmd->add_option("--seed", lv_seed);
    verify_cmd->add_flag("--force", lv_force, "allow exhaustive n > 3");

    int64_t lp_n = 2;
    CLI::App* print_cmd = lemma_cmd->add_subcommand("print", "print the weight matrices");
    print_cmd->add_option("--n", lp_n);

    std::string sm_task = "parity";
    int64_t sm_len = 10, sm_n = 5;
    double sm_p1 = 0.5;
    uint64_t sm_seed = 0;
    CLI::App* sample_cmd = app.add_subcommand("sample", "print oracle-labeled samples");
    sample_cmd->add_option("--task", sm_task);
    sample_cmd->add_option("--length", sm_len);
    sample_cmd->add_option("--n", sm_n);
    sample_cmd->add_option("--p1", sm_p1);
    sample_cmd->add_option("--seed", sm_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train_cmd) {
            if (!ta.config_path.empty()) merge_config_file(ta, train_cmd);
            return cmd_train(ta);
        }
        if (*eval_cmd) return cmd_eval(ev_ckpt, ev_lengths, ev_n, ev_p1, ev_seed, ev_out);
        if (*cluster_cmd) return cmd_analyze_cluster(cl_ckpt, cl_task, cl_T, cl_k, cl_seed, cl_out);
        if (*receptive_cmd) return cmd_analyze_receptive(rf_ckpt, rf_T, rf_seed, rf_out);
        if (*routing_cmd) return cmd_analyze_routing(rt_C, rt_T);
        if (*cost_cmd) return cmd_analyze_cost(co_C, co_T, co_K, co_vL);
        if (*verify_cmd) return cmd_lemma_verify(lv_n, lv_mode, lv_trials, lv_seed, lv_force);
        if (*print_cmd) return cmd_lemma_print(lp_n);
        if (*sample_cmd) return cmd_sample(sm_task, sm_len, sm_n, sm_p1, sm_seed);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
