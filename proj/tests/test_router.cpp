#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "pb/router.hpp"
#include "pb/util.hpp"

using namespace pb;
namespace fs = std::filesystem;

namespace {

Task make_task(const std::string& id, DatasetId dataset, const std::string& prompt) {
    Task t;
    t.id = id;
    t.dataset = dataset;
    t.prompt = prompt;
    return t;
}

RunRecord rec(const std::string& model, ParadigmId p, DatasetId d, const std::string& task,
              bool success, int64_t tokens) {
    RunRecord r;
    r.model = model;
    r.paradigm = p;
    r.dataset = d;
    r.task_id = task;
    r.success = success;
    r.tokens_total = tokens;
    r.llm_calls = 1;
    return r;
}

// Central finite differences over every parameter of an LR model.
double max_lr_gradcheck_error(const Eigen::MatrixXd& X, const std::vector<int>& y,
                              const Eigen::VectorXd& wts, double l2, Eigen::MatrixXd W,
                              Eigen::VectorXd b) {
    Eigen::MatrixXd gW;
    Eigen::VectorXd gb;
    lr_loss_and_grad(X, y, wts, l2, W, b, &gW, &gb);
    const double h = 1e-5;
    double worst = 0.0;
    auto rel = [](double analytic, double numeric) {
        return std::fabs(analytic - numeric) /
               std::max(1.0, std::fabs(analytic) + std::fabs(numeric));
    };
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
        for (Eigen::Index c = 0; c < W.cols(); ++c) {
            Eigen::MatrixXd Wp = W, Wm = W;
            Wp(r, c) += h;
            Wm(r, c) -= h;
            double fp = lr_loss_and_grad(X, y, wts, l2, Wp, b, nullptr, nullptr);
            double fm = lr_loss_and_grad(X, y, wts, l2, Wm, b, nullptr, nullptr);
            worst = std::max(worst, rel(gW(r, c), (fp - fm) / (2 * h)));
        }
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        Eigen::VectorXd bp = b, bm = b;
        bp[i] += h;
        bm[i] -= h;
        double fp = lr_loss_and_grad(X, y, wts, l2, W, bp, nullptr, nullptr);
        double fm = lr_loss_and_grad(X, y, wts, l2, W, bm, nullptr, nullptr);
        worst = std::max(worst, rel(gb[i], (fp - fm) / (2 * h)));
    }
    return worst;
}

struct SyntheticSet {
    std::vector<Task> tasks;
    Eigen::MatrixXd features;
    std::vector<ParadigmId> labels;
};

// Labels follow the has_math / has_code features deterministically.
SyntheticSet synthetic_set(int n, uint64_t seed) {
    SyntheticSet out;
    SplitMix64 rng(seed);
    std::vector<ParadigmId> labels;
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.below(3));
        std::string prompt;
        ParadigmId label;
        const std::string noise = "item " + std::to_string(rng.next() % 9973);
        if (cls == 0) {
            prompt = "Compute \\frac{1}{" + std::to_string(2 + i % 7) + "} + " +
                     std::to_string(i % 5) + " " + noise;
            label = ParadigmId::CoT;
        } else if (cls == 1) {
            prompt = "Complete the function.\ndef f_" + std::to_string(i) +
                     "(x):\n    pass  " + noise;
            label = ParadigmId::ReCode;
        } else {
            prompt = "Briefly describe the landmark mentioned in " + noise;
            label = ParadigmId::Direct;
        }
        Task t = make_task("s" + std::to_string(i), DatasetId::NQ, prompt);
        out.tasks.push_back(t);
        labels.push_back(label);
    }
    out.features.resize(n, kHandcraftedDims);
    for (int i = 0; i < n; ++i) {
        out.features.row(i) = handcrafted_features(out.tasks[static_cast<size_t>(i)]).transpose();
    }
    out.labels = labels;
    return out;
}

double training_accuracy(const RouterModel& model, const SyntheticSet& set) {
    int correct = 0;
    for (size_t i = 0; i < set.tasks.size(); ++i) {
        if (predict(model, set.tasks[i], nullptr) == set.labels[i]) ++correct;
    }
    return 100.0 * correct / static_cast<double>(set.tasks.size());
}

}  // namespace

TEST_CASE("handcrafted features follow the documented layout") {
    SUBCASE("MMLU multiple-choice question") {
        Task t = make_task("q", DatasetId::MMLU, "Which of the following is a prime?");
        t.choices = {"4", "6", "7", "9"};
        Eigen::VectorXd v = handcrafted_features(t);
        REQUIRE(v.size() == kHandcraftedDims);
        CHECK(v[5] == 1.0);   // MMLU one-hot slot
        CHECK(v.head(10).sum() == 1.0);
        CHECK(v[16] == 1.0);  // has_choices
        CHECK(v[18] == 1.0);  // which|who
        CHECK(v[17] == 0.0);
    }
    SUBCASE("math prompt sets has_math and no question-type dims") {
        Task t = make_task("m", DatasetId::MATH500, "Compute \\frac{1}{2}+\\frac{1}{3}");
        Eigen::VectorXd v = handcrafted_features(t);
        CHECK(v[1] == 1.0);   // MATH500 one-hot
        CHECK(v[15] == 1.0);  // has_math
        CHECK(v[14] == 0.0);
        for (int d = 17; d <= 21; ++d) CHECK(v[d] == 0.0);
    }
    SUBCASE("unknown dataset leaves the one-hot empty but computes the rest") {
        Task t;
        t.id = "u";
        t.prompt = "How long is the bridge?";
        Eigen::VectorXd v = handcrafted_features(t);
        CHECK(v.head(10).sum() == 0.0);
        CHECK(v[10] > 0.0);   // char length
        CHECK(v[20] == 1.0);  // how
    }
    SUBCASE("code detectors") {
        Task t = make_task("c", DatasetId::HumanEval, "def add(a, b):\n    pass");
        CHECK(handcrafted_features(t)[14] == 1.0);
        Task semi = make_task("c2", DatasetId::HumanEval, "int x = 1;\nreturn x;");
        CHECK(handcrafted_features(semi)[14] == 1.0);
    }
    SUBCASE("question indicators are non-exclusive") {
        Task t = make_task("q2", DatasetId::NQ, "What happened and how did it end?");
        Eigen::VectorXd v = handcrafted_features(t);
        CHECK(v[17] == 1.0);
        CHECK(v[20] == 1.0);
    }
}

TEST_CASE("build_labels picks the cheapest successful paradigm") {
    std::vector<Task> tasks = {make_task("t1", DatasetId::NQ, "p1"),
                               make_task("t2", DatasetId::NQ, "p2"),
                               make_task("t3", DatasetId::NQ, "p3")};
    RunMatrix m;
    // t1: CoT (900 tokens) and ReAct (4000) succeed
    m.insert(rec("m", ParadigmId::CoT, DatasetId::NQ, "t1", true, 900));
    m.insert(rec("m", ParadigmId::ReAct, DatasetId::NQ, "t1", true, 4000));
    // t2: nothing succeeds
    m.insert(rec("m", ParadigmId::Direct, DatasetId::NQ, "t2", false, 100));
    // t3: exact token tie between Direct and ReCode
    m.insert(rec("m", ParadigmId::ReCode, DatasetId::NQ, "t3", true, 500));
    m.insert(rec("m", ParadigmId::Direct, DatasetId::NQ, "t3", true, 500));

    LabelSet labels = build_labels(m, "m", tasks);
    REQUIRE(labels.labeled.size() == 2);
    CHECK(labels.labeled[0].task->id == "t1");
    CHECK(labels.labeled[0].label == ParadigmId::CoT);
    CHECK(labels.labeled[0].tokens_of_label == 900);
    CHECK(labels.labeled[1].task->id == "t3");
    CHECK(labels.labeled[1].label == ParadigmId::Direct);  // rank 0 beats rank 5
    REQUIRE(labels.unwinnable.size() == 1);
    CHECK(labels.unwinnable[0]->id == "t2");
}

TEST_CASE("label validity: every label's run succeeded") {
    SplitMix64 rng(5);
    RunMatrix m;
    std::vector<Task> tasks;
    for (int i = 0; i < 30; ++i) {
        const std::string id = "t" + std::to_string(i);
        tasks.push_back(make_task(id, DatasetId::NQ, "p"));
        for (ParadigmId p : all_paradigms()) {
            m.insert(rec("m", p, DatasetId::NQ, id, rng.below(2) == 0,
                         static_cast<int64_t>(100 + rng.below(1000))));
        }
    }
    for (const auto& ex : build_labels(m, "m", tasks).labeled) {
        const RunRecord* r = m.find(RunKey{"m", ex.label, DatasetId::NQ, ex.task->id});
        REQUIRE(r != nullptr);
        CHECK(r->success);
        CHECK(r->tokens_total == ex.tokens_of_label);
    }
}

TEST_CASE("stratified split honors the 70% floor per dataset") {
    std::vector<Task> tasks;
    for (int i = 0; i < 10; ++i) {
        tasks.push_back(make_task("t" + std::to_string(i), DatasetId::NQ, "p"));
    }
    auto [train, test] = split_stratified(tasks, 0.7, 42);
    CHECK(train.size() == 7);
    CHECK(test.size() == 3);

    // determinism and task-identity seeding: shuffled input, same split sets
    auto shuffled = tasks;
    std::reverse(shuffled.begin(), shuffled.end());
    auto [train2, test2] = split_stratified(shuffled, 0.7, 42);
    std::set<std::string> ids1, ids2;
    for (const auto& t : train) ids1.insert(t.id);
    for (const auto& t : train2) ids2.insert(t.id);
    CHECK(ids1 == ids2);
}

TEST_CASE("split with the reference per-dataset counts lands on 532/229") {
    const std::map<DatasetId, int> counts = {
        {DatasetId::HumanEval, 100}, {DatasetId::MATH500, 100}, {DatasetId::AIME, 60},
        {DatasetId::HotpotQA, 100},  {DatasetId::NQ, 100},      {DatasetId::MMLU, 100},
        {DatasetId::HLE, 50},        {DatasetId::GAIA, 50},     {DatasetId::TauBench, 51},
        {DatasetId::SEAL, 50}};
    std::vector<Task> tasks;
    for (const auto& [dataset, n] : counts) {
        for (int i = 0; i < n; ++i) {
            tasks.push_back(
                make_task(dataset_name(dataset) + "_" + std::to_string(i), dataset, "p"));
        }
    }
    REQUIRE(tasks.size() == 761);
    auto [train, test] = split_stratified(tasks, 0.7, 42);
    CHECK(train.size() == 532);
    CHECK(test.size() == 229);
}

TEST_CASE("standardization: zero mean, unit variance, zero-variance guard") {
    Eigen::MatrixXd X(3, 3);
    X << 1, 10, 5,
         2, 10, 7,
         3, 10, 9;
    StandardizeStats stats = standardize_fit(X);
    Eigen::MatrixXd Z = standardize_apply(stats, X);
    for (int c : {0, 2}) {
        CHECK(std::fabs(Z.col(c).mean()) < 1e-9);
        double var = (Z.col(c).array() - Z.col(c).mean()).square().mean();
        CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
    }
    // constant column maps to zero
    CHECK(Z.col(1).cwiseAbs().maxCoeff() == 0.0);
    // manual check on a held-out vector: (v - mean) / std
    Eigen::VectorXd v(3);
    v << 4, 10, 11;
    Eigen::VectorXd z = standardize_apply(stats, v);
    CHECK(z[0] == doctest::Approx((4.0 - 2.0) / std::sqrt(2.0 / 3.0)));
    CHECK(z[1] == 0.0);
}

TEST_CASE("standardization stats derive from the training set only") {
    Eigen::MatrixXd train(2, 1), test(2, 1);
    train << 0, 2;
    test << 100, 102;
    StandardizeStats from_train = standardize_fit(train);
    StandardizeStats from_test = standardize_fit(test);
    // negative control: recomputing from test changes the stats
    CHECK(from_train.mean[0] != from_test.mean[0]);
}

TEST_CASE("balanced class weights follow n/(k*n_c)") {
    std::vector<ParadigmId> labels = {ParadigmId::Direct, ParadigmId::Direct, ParadigmId::CoT,
                                      ParadigmId::ReAct};
    auto w = balanced_class_weights(labels);
    CHECK(w.at(ParadigmId::Direct) == doctest::Approx(4.0 / (3.0 * 2.0)));
    CHECK(w.at(ParadigmId::CoT) == doctest::Approx(4.0 / 3.0));
    CHECK(w.at(ParadigmId::ReAct) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("LR reaches 99% on a separable two-class problem") {
    SplitMix64 rng(3);
    const int n = 120;
    Eigen::MatrixXd X(n, 4);
    std::vector<ParadigmId> y;
    for (int i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        X(i, 0) = (pos ? 2.0 : -2.0) + 0.1 * rng.normal();
        X(i, 1) = rng.normal();
        X(i, 2) = rng.normal();
        X(i, 3) = (pos ? -1.0 : 1.0) + 0.1 * rng.normal();
        y.push_back(pos ? ParadigmId::Direct : ParadigmId::ReAct);
    }
    RouterModel model = train_lr(X, y, 42);
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd s = model.scores(X.row(i).transpose());
        int best = 0;
        for (int c = 1; c < kParadigmCount; ++c) {
            if (s[c] > s[best]) best = c;
        }
        if (static_cast<ParadigmId>(best) == y[static_cast<size_t>(i)]) ++correct;
    }
    CHECK(100.0 * correct / n >= 99.0);
}

TEST_CASE("LR analytic gradient matches central finite differences") {
    SplitMix64 rng(9);
    const int n = 12, d = 5;
    Eigen::MatrixXd X(n, d);
    std::vector<int> y;
    Eigen::VectorXd wts(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        y.push_back(static_cast<int>(rng.below(6)));
        wts[i] = 0.5 + rng.uniform01();
    }
    Eigen::MatrixXd W(6, d);
    Eigen::VectorXd b(6);
    for (int r = 0; r < 6; ++r) {
        b[r] = rng.normal() * 0.1;
        for (int c = 0; c < d; ++c) W(r, c) = rng.normal() * 0.3;
    }
    CHECK(max_lr_gradcheck_error(X, y, wts, 1.0, W, b) <= 1e-4);
}

TEST_CASE("LR training requires two distinct labels") {
    Eigen::MatrixXd X(3, 2);
    X.setRandom();
    std::vector<ParadigmId> y = {ParadigmId::Direct, ParadigmId::Direct, ParadigmId::Direct};
    CHECK_THROWS_AS(train_lr(X, y, 42), std::invalid_argument);
    CHECK_THROWS_AS(train_mlp(X, y, 42), std::invalid_argument);
}

TEST_CASE("MLP training is seed-deterministic") {
    SyntheticSet set = synthetic_set(90, 17);
    MlpOptions opt;
    opt.max_epochs = 40;
    RouterModel a = train_mlp(set.features, set.labels, 42, opt);
    RouterModel b = train_mlp(set.features, set.labels, 42, opt);
    REQUIRE(a.weights.size() == b.weights.size());
    for (size_t l = 0; l < a.weights.size(); ++l) {
        CHECK((a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.biases[l] - b.biases[l]).cwiseAbs().maxCoeff() == 0.0);
    }
    // inference has dropout off: repeated predictions agree
    for (size_t i = 0; i < 5; ++i) {
        CHECK(predict(a, set.tasks[i], nullptr) == predict(a, set.tasks[i], nullptr));
    }
    RouterModel c = train_mlp(set.features, set.labels, 43, opt);
    bool any_diff = false;
    for (size_t l = 0; l < a.weights.size(); ++l) {
        if ((a.weights[l] - c.weights[l]).cwiseAbs().maxCoeff() > 0) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("MLP architecture is d -> 128 -> 64 -> 6") {
    SyntheticSet set = synthetic_set(60, 21);
    MlpOptions opt;
    opt.max_epochs = 5;
    RouterModel m = train_mlp(set.features, set.labels, 42, opt);
    REQUIRE(m.weights.size() == 3);
    CHECK(m.weights[0].rows() == 128);
    CHECK(m.weights[0].cols() == kHandcraftedDims);
    CHECK(m.weights[1].rows() == 64);
    CHECK(m.weights[1].cols() == 128);
    CHECK(m.weights[2].rows() == 6);
    CHECK(m.weights[2].cols() == 64);
}

TEST_CASE("MLP gradient (dropout off) matches finite differences") {
    SyntheticSet set = synthetic_set(20, 29);
    MlpOptions opt;
    opt.max_epochs = 3;
    RouterModel model = train_mlp(set.features, set.labels, 42, opt);

    Eigen::MatrixXd X = standardize_apply(model.stats, set.features.topRows(8));
    std::vector<int> y;
    for (int i = 0; i < 8; ++i) y.push_back(canonical_order(set.labels[static_cast<size_t>(i)]));

    std::vector<Eigen::MatrixXd> gW;
    std::vector<Eigen::VectorXd> gb;
    mlp_loss_and_grad(model, X, y, &gW, &gb);

    const double h = 1e-5;
    double worst = 0.0;
    auto rel = [](double analytic, double numeric) {
        return std::fabs(analytic - numeric) /
               std::max(1.0, std::fabs(analytic) + std::fabs(numeric));
    };
    SplitMix64 rng(4);
    for (size_t layer = 0; layer < 3; ++layer) {
        for (int probe = 0; probe < 40; ++probe) {
            Eigen::Index r = static_cast<Eigen::Index>(
                rng.below(static_cast<uint64_t>(model.weights[layer].rows())));
            Eigen::Index c = static_cast<Eigen::Index>(
                rng.below(static_cast<uint64_t>(model.weights[layer].cols())));
            RouterModel plus = model, minus = model;
            plus.weights[layer](r, c) += h;
            minus.weights[layer](r, c) -= h;
            double fp = mlp_loss_and_grad(plus, X, y, nullptr, nullptr);
            double fm = mlp_loss_and_grad(minus, X, y, nullptr, nullptr);
            worst = std::max(worst, rel(gW[layer](r, c), (fp - fm) / (2 * h)));
        }
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("predict breaks ties by canonical order and ignores positive scaling") {
    SyntheticSet set = synthetic_set(40, 31);
    Task probe = set.tasks[0];

    RouterModel zeros;
    zeros.kind = RouterModel::Kind::LR;
    zeros.layout = FeatureLayout::Handcrafted;
    zeros.stats.mean = Eigen::VectorXd::Zero(kHandcraftedDims);
    zeros.stats.std = Eigen::VectorXd::Ones(kHandcraftedDims);
    zeros.weights = {Eigen::MatrixXd::Zero(6, kHandcraftedDims)};
    zeros.biases = {Eigen::VectorXd::Zero(6)};
    CHECK(predict(zeros, probe, nullptr) == ParadigmId::Direct);  // rank-0 tie break

    RouterModel lr = train_lr(set.features, set.labels, 42);
    lr.layout = FeatureLayout::Handcrafted;
    RouterModel scaled = lr;
    scaled.weights[0] *= 2.0;
    scaled.biases[0] *= 2.0;
    for (const Task& t : set.tasks) {
        CHECK(predict(lr, t, nullptr) == predict(scaled, t, nullptr));
    }
}

TEST_CASE("hand-built LR weights route to the favored class") {
    RouterModel m;
    m.kind = RouterModel::Kind::LR;
    m.layout = FeatureLayout::Handcrafted;
    m.stats.mean = Eigen::VectorXd::Zero(kHandcraftedDims);
    m.stats.std = Eigen::VectorXd::Ones(kHandcraftedDims);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(6, kHandcraftedDims);
    W(canonical_order(ParadigmId::CoT), 15) = 5.0;  // reward has_math
    m.weights = {W};
    m.biases = {Eigen::VectorXd::Zero(6)};
    Task math = make_task("m", DatasetId::MATH500, "Compute 2+2 = ?");
    CHECK(predict(m, math, nullptr) == ParadigmId::CoT);
}

TEST_CASE("downstream accuracy of a constant-Direct router equals the Direct rate") {
    std::vector<Task> tasks;
    RunMatrix matrix;
    SplitMix64 rng(13);
    int direct_successes = 0;
    for (int i = 0; i < 40; ++i) {
        const std::string id = "t" + std::to_string(i);
        tasks.push_back(make_task(id, DatasetId::NQ, "plain prompt " + std::to_string(i)));
        bool direct_ok = rng.below(2) == 0;
        if (direct_ok) ++direct_successes;
        matrix.insert(rec("m", ParadigmId::Direct, DatasetId::NQ, id, direct_ok, 100));
        matrix.insert(rec("m", ParadigmId::CoT, DatasetId::NQ, id, true, 100));
    }
    RouterModel constant_direct;
    constant_direct.kind = RouterModel::Kind::LR;
    constant_direct.layout = FeatureLayout::Handcrafted;
    constant_direct.stats.mean = Eigen::VectorXd::Zero(kHandcraftedDims);
    constant_direct.stats.std = Eigen::VectorXd::Ones(kHandcraftedDims);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(6, kHandcraftedDims);
    constant_direct.weights = {W};
    Eigen::VectorXd b = Eigen::VectorXd::Zero(6);
    b[0] = 10.0;
    constant_direct.biases = {b};

    double acc = downstream_accuracy(constant_direct, matrix, "m", tasks, nullptr);
    CHECK(acc == doctest::Approx(100.0 * direct_successes / 40.0));
}

TEST_CASE("downstream accuracy counts missing records and unwinnable tasks as incorrect") {
    std::vector<Task> tasks = {make_task("t1", DatasetId::NQ, "p1"),
                               make_task("t2", DatasetId::NQ, "p2")};
    RunMatrix matrix;  // t2 has no record at all for the chosen paradigm
    matrix.insert(rec("m", ParadigmId::Direct, DatasetId::NQ, "t1", true, 10));
    RouterModel constant_direct;
    constant_direct.kind = RouterModel::Kind::LR;
    constant_direct.layout = FeatureLayout::Handcrafted;
    constant_direct.stats.mean = Eigen::VectorXd::Zero(kHandcraftedDims);
    constant_direct.stats.std = Eigen::VectorXd::Ones(kHandcraftedDims);
    constant_direct.weights = {Eigen::MatrixXd::Zero(6, kHandcraftedDims)};
    constant_direct.biases = {Eigen::VectorXd::Zero(6)};
    CHECK(downstream_accuracy(constant_direct, matrix, "m", tasks, nullptr) ==
          doctest::Approx(50.0));
}

TEST_CASE("self_route parses boxed paradigm names case-insensitively") {
    Task t = make_task("t", DatasetId::NQ, "pick a paradigm");
    SUBCASE("exact name") {
        ScriptedBackend b;
        b.push_response("\\boxed{ReAct}");
        SelfRouteResult r = self_route(t, b, "m");
        CHECK(r.paradigm == ParadigmId::ReAct);
        CHECK(!r.parse_failed);
    }
    SUBCASE("lowercase") {
        ScriptedBackend b;
        b.push_response("\\boxed{react}");
        CHECK(self_route(t, b, "m").paradigm == ParadigmId::ReAct);
    }
    SUBCASE("unparseable falls back to Direct with a flag") {
        ScriptedBackend b;
        b.push_response("I like plans");
        SelfRouteResult r = self_route(t, b, "m");
        CHECK(r.paradigm == ParadigmId::Direct);
        CHECK(r.parse_failed);
    }
}

TEST_CASE("distribution report sums to 100 and matches hand counts") {
    std::vector<ParadigmId> predictions;
    for (int i = 0; i < 151; ++i) predictions.push_back(ParadigmId::Direct);
    for (int i = 0; i < 229 - 151; ++i) predictions.push_back(ParadigmId::ReAct);
    auto dist = distribution_report(predictions);
    CHECK(dist.at(ParadigmId::Direct) == doctest::Approx(65.9).epsilon(0.001));
    double total = 0;
    for (const auto& [p, v] : dist) total += v;
    CHECK(total == doctest::Approx(100.0).epsilon(0.001));

    auto single = distribution_report({ParadigmId::CoT});
    CHECK(single.at(ParadigmId::CoT) == doctest::Approx(100.0));
    CHECK(single.at(ParadigmId::Direct) == doctest::Approx(0.0));
    CHECK_THROWS_AS(distribution_report({}), std::invalid_argument);
}

TEST_CASE("router model JSON round-trip preserves predictions") {
    SyntheticSet set = synthetic_set(80, 37);
    RouterModel lr = train_lr(set.features, set.labels, 42);
    lr.layout = FeatureLayout::Handcrafted;

    const std::string path = "/tmp/pb_router_model_test.json";
    save_router_model(path, lr);
    RouterModel back = load_router_model(path);
    fs::remove(path);
    CHECK(back.kind == lr.kind);
    CHECK(back.layout == lr.layout);
    for (const Task& t : set.tasks) {
        CHECK(predict(back, t, nullptr) == predict(lr, t, nullptr));
    }
}

TEST_CASE("embedding cache avoids repeat embedding calls") {
    const std::string path = "/tmp/pb_embed_cache_test.jsonl";
    fs::remove(path);
    ScriptedBackend backend(32);
    {
        EmbeddingCache cache(path, "embed-model");
        cache.get_or_compute("alpha", backend);
        cache.get_or_compute("alpha", backend);
        CHECK(backend.embed_calls() == 1);
    }
    {
        // a fresh cache instance reloads from disk: still no new call
        EmbeddingCache cache(path, "embed-model");
        cache.get_or_compute("alpha", backend);
        CHECK(backend.embed_calls() == 1);
        cache.get_or_compute("beta", backend);
        CHECK(backend.embed_calls() == 2);
    }
    fs::remove(path);
}
