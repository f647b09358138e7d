#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "regulargpt/analysis.hpp"
#include "regulargpt/automata.hpp"
#include "regulargpt/checkpoint.hpp"
#include "regulargpt/lemma.hpp"
#include "regulargpt/train.hpp"

namespace py = pybind11;
using namespace regulargpt;

PYBIND11_MODULE(_core, m) {
    m.doc() = "regular-language transformer core";

    py::class_<TaskSpec>(m, "TaskSpec")
        .def_readonly("name", &TaskSpec::name)
        .def_readonly("vocab", &TaskSpec::vocab)
        .def_readonly("num_task_symbols", &TaskSpec::num_task_symbols)
        .def_readonly("pad_symbol", &TaskSpec::pad_symbol)
        .def("num_states", [](const TaskSpec& t) { return t.automaton.num_states; });

    m.def("task_names", &task_names);
    m.def("make_task", &make_task, py::arg("name"));
    m.def(
        "sample",
        [](const TaskSpec& task, int64_t length, uint64_t seed, double p1) {
            Rng rng = Rng(seed).fork(1);
            Sample s = sample(task, length, rng, p1);
            return py::make_tuple(s.tokens, s.answer);
        },
        py::arg("task"), py::arg("length"), py::arg("seed") = 0, py::arg("p1") = 0.5);
    m.def(
        "oracle",
        [](const TaskSpec& task, const std::vector<int64_t>& tokens) { return oracle(task, tokens); },
        py::arg("task"), py::arg("tokens"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("chunk", &ModelConfig::chunk)
        .def_readwrite("thickness", &ModelConfig::thickness)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("d_ffn", &ModelConfig::d_ffn)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("pad_symbol", &ModelConfig::pad_symbol)
        .def_readwrite("max_groups", &ModelConfig::max_groups)
        .def_readwrite("kind", &ModelConfig::kind)
        .def_readwrite("vanilla_layers", &ModelConfig::vanilla_layers)
        .def_readwrite("rel_buckets", &ModelConfig::rel_buckets)
        .def("validate", &ModelConfig::validate);

    m.def("adaptive_depth", &adaptive_depth, py::arg("seq_len"), py::arg("chunk"));

    py::class_<Model<float>>(m, "Model")
        .def(py::init<const ModelConfig&, uint64_t>(), py::arg("config"), py::arg("seed"))
        .def("logits",
             [](Model<float>& self, const std::vector<std::vector<int64_t>>& batch) {
                 Tape<float> tape(/*recording=*/false);
                 Var<float> out = self.forward(tape, batch);
                 std::vector<std::vector<float>> rows;
                 for (int64_t r = 0; r < out.val().rows(); ++r) {
                     std::vector<float> row;
                     for (int64_t c = 0; c < out.val().cols(); ++c) row.push_back(out.val().at(r, c));
                     rows.push_back(std::move(row));
                 }
                 return rows;
             })
        .def_property_readonly("config", [](const Model<float>& self) { return self.cfg; });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("task", &TrainConfig::task)
        .def_readwrite("model", &TrainConfig::model)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("max_steps", &TrainConfig::max_steps)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("t_tr", &TrainConfig::t_tr)
        .def_readwrite("p1", &TrainConfig::p1)
        .def_readwrite("early_stop", &TrainConfig::early_stop)
        .def_readwrite("early_stop_patience", &TrainConfig::early_stop_patience)
        .def_readwrite("log_every", &TrainConfig::log_every);

    m.def(
        "train",
        [](Model<float>& model, const TaskSpec& task, const TrainConfig& cfg) {
            TrainResult r = train(model, task, cfg);
            py::dict d;
            d["steps_run"] = r.steps_run;
            d["diverged"] = r.diverged;
            d["final_train_acc"] = r.final_train_acc;
            std::vector<py::tuple> curve;
            for (const LogPoint& lp : r.curve)
                curve.push_back(py::make_tuple(lp.step, lp.loss, lp.train_acc));
            d["curve"] = curve;
            return d;
        },
        py::arg("model"), py::arg("task"), py::arg("config"));
    m.def(
        "evaluate",
        [](Model<float>& model, const TaskSpec& task, int64_t from, int64_t to, int64_t step,
           int64_t n, double p1, uint64_t seed) {
            EvalReport r = evaluate(model, task, from, to, step, n, p1, seed);
            py::dict d;
            d["per_length"] = r.per_length;
            d["average"] = r.average;
            d["p1"] = r.p1;
            return d;
        },
        py::arg("model"), py::arg("task"), py::arg("from_len"), py::arg("to_len"),
        py::arg("step") = 1, py::arg("n") = 100, py::arg("p1") = 0.5, py::arg("seed") = 0);

    m.def(
        "save_checkpoint",
        [](Model<float>& model, const std::string& task, uint64_t seed, int64_t step,
           const std::string& prefix) {
            save_checkpoint(model, CheckpointMeta{task, seed, step}, prefix);
        },
        py::arg("model"), py::arg("task"), py::arg("seed"), py::arg("step"), py::arg("prefix"));
    m.def(
        "load_checkpoint",
        [](const std::string& prefix) {
            auto [model, meta] = load_checkpoint<float>(prefix);
            // Model is move-only; hand the heap copy to python outright.
            py::object owned = py::cast(new Model<float>(std::move(model)),
                                        py::return_value_policy::take_ownership);
            return py::make_tuple(owned, meta.task, meta.seed, meta.step);
        },
        py::arg("prefix"));

    m.def("build_W1", &build_W1, py::arg("n"));
    m.def("build_W2", &build_W2, py::arg("n"));
    m.def("mlp_binary_matmul", &mlp_binary_matmul, py::arg("a"), py::arg("b"), py::arg("n"));
    m.def(
        "verify_lemma",
        [](int64_t n, bool exhaustive, int64_t trials, uint64_t seed) {
            LemmaReport r = verify_lemma(n, exhaustive, trials, seed);
            return py::make_tuple(r.pass, r.trials, r.counterexample);
        },
        py::arg("n"), py::arg("exhaustive"), py::arg("trials") = 10000, py::arg("seed") = 0);

    m.def("routing_coverage", &routing_coverage, py::arg("chunk"), py::arg("seq_len"));
    m.def("attention_cost", &attention_cost, py::arg("chunk"), py::arg("thickness"),
          py::arg("seq_len"), py::arg("groups"));
    m.def("vanilla_cost", &vanilla_cost, py::arg("seq_len"), py::arg("layers"));
    m.def(
        "cluster_purity",
        [](Model<float>& model, const TaskSpec& task, int64_t T, int64_t k, uint64_t seed) {
            Rng rng = Rng(seed).fork(5);
            Sample s = sample(task, T, rng);
            LayerOutputDump dump = collect_outputs(model, task, s.tokens);
            std::vector<std::vector<double>> vecs;
            std::vector<std::string> labels;
            for (const OutputRecord& rec : dump.records) {
                vecs.push_back(rec.vec);
                labels.push_back(rec.label);
            }
            std::vector<std::string> order;
            for (const std::string& l : labels)
                if (std::find(order.begin(), order.end(), l) == order.end()) order.push_back(l);
            if (k <= 0) k = static_cast<int64_t>(order.size());
            PcaResult pca = pca_2d(vecs);
            KmeansResult km = kmeans_2d(pca.projections, k, 20, seed);
            std::vector<int64_t> ids;
            for (const std::string& l : labels)
                ids.push_back(std::find(order.begin(), order.end(), l) - order.begin());
            return py::make_tuple(purity(km.assignment, ids, k), order.size());
        },
        py::arg("model"), py::arg("task"), py::arg("T") = 500, py::arg("k") = 0,
        py::arg("seed") = 0);
    m.def(
        "receptive_profile",
        [](Model<float>& model, const TaskSpec& task, const std::vector<int64_t>& tokens) {
            ReceptiveProfile p = receptive_field(model, task, tokens);
            py::dict d;
            d["grad_norm"] = p.grad_norm;
            d["cumulative"] = p.cumulative;
            d["total"] = p.total;
            return d;
        },
        py::arg("model"), py::arg("task"), py::arg("tokens"));
}
