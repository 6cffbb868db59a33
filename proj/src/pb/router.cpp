#include "pb/router.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include "pb/evalkit.hpp"
#include "pb/paradigms.hpp"
#include "pb/prompts.hpp"
#include "pb/runner.hpp"
#include "pb/util.hpp"

using nlohmann::json;

namespace pb {

// ---------------------------------------------------------------------------
// Features

std::string feature_layout_name(FeatureLayout layout) {
    switch (layout) {
        case FeatureLayout::Handcrafted: return "handcrafted";
        case FeatureLayout::Embedding: return "embedding";
        case FeatureLayout::Combined: return "combined";
    }
    return "handcrafted";
}

std::optional<FeatureLayout> parse_feature_layout(const std::string& name) {
    if (name == "handcrafted") return FeatureLayout::Handcrafted;
    if (name == "embedding") return FeatureLayout::Embedding;
    if (name == "combined") return FeatureLayout::Combined;
    return std::nullopt;
}

int feature_dims(FeatureLayout layout, int embedding_dim) {
    switch (layout) {
        case FeatureLayout::Handcrafted: return kHandcraftedDims;
        case FeatureLayout::Embedding: return embedding_dim;
        case FeatureLayout::Combined: return embedding_dim + kHandcraftedDims;
    }
    return kHandcraftedDims;
}

namespace {

std::set<std::string> word_set(const std::string& text) {
    std::set<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.insert(current);
            current.clear();
        }
    }
    if (!current.empty()) words.insert(current);
    return words;
}

bool has_code_signal(const std::string& prompt) {
    if (prompt.find("```") != std::string::npos) return true;
    if (prompt.find("def ") != std::string::npos) return true;
    for (const auto& line : split_lines(prompt)) {
        std::string t = trim(line);
        if (!t.empty() && t.back() == ';') return true;
    }
    return false;
}

bool has_math_signal(const std::string& prompt) {
    if (prompt.find("\\frac") != std::string::npos) return true;
    if (prompt.find("\\boxed") != std::string::npos) return true;
    if (prompt.find('=') != std::string::npos) return true;
    static const std::regex digit_op(R"([0-9]\s*[-+*/^]\s*[0-9])");
    return std::regex_search(prompt, digit_op);
}

bool has_choices_signal(const Task& task) {
    if (!task.choices.empty()) return true;
    for (const auto& line : split_lines(task.prompt)) {
        std::string t = trim(line);
        if (t.size() >= 2 && t[0] >= 'A' && t[0] <= 'E' && t[1] == ')') return true;
    }
    return false;
}

}  // namespace

Eigen::VectorXd handcrafted_features(const Task& task) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(kHandcraftedDims);
    if (task.dataset) v[static_cast<int>(*task.dataset)] = 1.0;  // unknown: all zeros

    const std::string& prompt = task.prompt;
    v[10] = static_cast<double>(prompt.size());

    size_t word_count = 0;
    size_t word_chars = 0;
    {
        std::string current;
        for (unsigned char c : prompt) {
            if (std::isspace(c)) {
                if (!current.empty()) {
                    ++word_count;
                    word_chars += current.size();
                    current.clear();
                }
            } else {
                current.push_back(static_cast<char>(c));
            }
        }
        if (!current.empty()) {
            ++word_count;
            word_chars += current.size();
        }
    }
    v[11] = static_cast<double>(word_count);
    v[12] = prompt.empty() ? 0.0 : static_cast<double>(split_lines(prompt).size());
    v[13] = word_count == 0 ? 0.0
                            : static_cast<double>(word_chars) / static_cast<double>(word_count);
    v[14] = has_code_signal(prompt) ? 1.0 : 0.0;
    v[15] = has_math_signal(prompt) ? 1.0 : 0.0;
    v[16] = has_choices_signal(task) ? 1.0 : 0.0;

    const std::set<std::string> words = word_set(prompt);
    auto any = [&](std::initializer_list<const char*> group) {
        for (const char* w : group) {
            if (words.count(w)) return 1.0;
        }
        return 0.0;
    };
    v[17] = any({"what"});
    v[18] = any({"which", "who"});
    v[19] = any({"when", "where"});
    v[20] = any({"how"});
    v[21] = any({"why"});
    return v;
}

Eigen::VectorXd task_features(const Task& task, FeatureLayout layout, int embedding_dim,
                              const EmbedFn& embed_fn) {
    if (layout == FeatureLayout::Handcrafted) return handcrafted_features(task);
    if (!embed_fn) {
        throw std::invalid_argument("embedding layout requires an embed function");
    }
    std::vector<double> emb = embed_fn(render_task_user_message(task));
    if (static_cast<int>(emb.size()) != embedding_dim) {
        throw std::invalid_argument("embedding dimension mismatch: got " +
                                    std::to_string(emb.size()) + ", expected " +
                                    std::to_string(embedding_dim));
    }
    Eigen::VectorXd v(feature_dims(layout, embedding_dim));
    for (int i = 0; i < embedding_dim; ++i) v[i] = emb[static_cast<size_t>(i)];
    if (layout == FeatureLayout::Combined) {
        v.tail(kHandcraftedDims) = handcrafted_features(task);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Labels and split

LabelSet build_labels(const RunMatrix& matrix, const std::string& model,
                      const std::vector<Task>& tasks) {
    LabelSet out;
    for (const Task& task : tasks) {
        if (!task.dataset) continue;
        const RunRecord* best = nullptr;
        for (const RunRecord* r : matrix.by_model_task(model, *task.dataset, task.id)) {
            if (!r->success) continue;
            // strict < keeps the lower canonical rank on token ties
            if (!best || r->tokens_total < best->tokens_total) best = r;
        }
        if (best) {
            out.labeled.push_back(LabeledExample{&task, best->paradigm, best->tokens_total});
        } else {
            out.unwinnable.push_back(&task);
        }
    }
    return out;
}

std::pair<std::vector<Task>, std::vector<Task>> split_stratified(const std::vector<Task>& tasks,
                                                                 double train_frac,
                                                                 uint64_t seed) {
    std::map<DatasetId, std::vector<Task>> by_dataset;
    for (const Task& t : tasks) {
        if (!t.dataset) {
            throw std::invalid_argument("split requires every task to carry a dataset id");
        }
        by_dataset[*t.dataset].push_back(t);
    }
    std::vector<Task> train, test;
    for (auto& [dataset, group] : by_dataset) {
        shuffle_for_dataset(group, dataset, seed);
        size_t n_train = static_cast<size_t>(
            std::floor(train_frac * static_cast<double>(group.size())));
        for (size_t i = 0; i < group.size(); ++i) {
            (i < n_train ? train : test).push_back(group[i]);
        }
    }
    return {train, test};
}

// ---------------------------------------------------------------------------
// Standardization

StandardizeStats standardize_fit(const Eigen::MatrixXd& train_features) {
    StandardizeStats stats;
    const double n = static_cast<double>(train_features.rows());
    stats.mean = train_features.colwise().mean();
    Eigen::MatrixXd centered = train_features.rowwise() - stats.mean.transpose();
    stats.std = (centered.array().square().colwise().sum() / n).sqrt();
    return stats;
}

Eigen::VectorXd standardize_apply(const StandardizeStats& stats, const Eigen::VectorXd& v) {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out[i] = stats.std[i] > 0.0 ? (v[i] - stats.mean[i]) / stats.std[i] : 0.0;
    }
    return out;
}

Eigen::MatrixXd standardize_apply(const StandardizeStats& stats, const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const Eigen::VectorXd row = rows.row(i).transpose();
        out.row(i) = standardize_apply(stats, row).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

std::map<ParadigmId, double> balanced_class_weights(const std::vector<ParadigmId>& labels) {
    std::map<ParadigmId, size_t> counts;
    for (ParadigmId p : labels) ++counts[p];
    const double n = static_cast<double>(labels.size());
    const double k = static_cast<double>(counts.size());
    std::map<ParadigmId, double> weights;
    for (const auto& [p, c] : counts) {
        weights[p] = n / (k * static_cast<double>(c));
    }
    return weights;
}

double lr_loss_and_grad(const Eigen::MatrixXd& X, const std::vector<int>& y,
                        const Eigen::VectorXd& example_weights, double l2,
                        const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                        Eigen::MatrixXd* grad_W, Eigen::VectorXd* grad_b) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd Z = X * W.transpose();
    Z.rowwise() += b.transpose();
    // stable softmax
    Eigen::VectorXd row_max = Z.rowwise().maxCoeff();
    Eigen::MatrixXd E = (Z.colwise() - row_max).array().exp();
    Eigen::VectorXd row_sum = E.rowwise().sum();
    Eigen::MatrixXd P = E.array().colwise() / row_sum.array();

    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        loss -= example_weights[i] * std::log(std::max(P(i, y[static_cast<size_t>(i)]), 1e-300));
    }
    loss /= static_cast<double>(n);
    loss += l2 / (2.0 * static_cast<double>(n)) * W.squaredNorm();

    if (grad_W || grad_b) {
        Eigen::MatrixXd dZ = P;
        for (Eigen::Index i = 0; i < n; ++i) {
            dZ(i, y[static_cast<size_t>(i)]) -= 1.0;
            dZ.row(i) *= example_weights[i] / static_cast<double>(n);
        }
        if (grad_W) *grad_W = dZ.transpose() * X + (l2 / static_cast<double>(n)) * W;
        if (grad_b) *grad_b = dZ.colwise().sum().transpose();
    }
    return loss;
}

namespace {

void check_trainable(const std::vector<ParadigmId>& labels) {
    std::set<ParadigmId> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) {
        throw std::invalid_argument("training requires at least two distinct labels");
    }
}

std::vector<int> label_indices(const std::vector<ParadigmId>& labels) {
    std::vector<int> y;
    y.reserve(labels.size());
    for (ParadigmId p : labels) y.push_back(canonical_order(p));
    return y;
}

}  // namespace

RouterModel train_lr(const Eigen::MatrixXd& features, const std::vector<ParadigmId>& labels,
                     uint64_t seed, const LrOptions& opt) {
    check_trainable(labels);
    if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw std::invalid_argument("features/labels size mismatch");
    }
    RouterModel model;
    model.kind = RouterModel::Kind::LR;
    model.seed = seed;
    model.stats = standardize_fit(features);
    Eigen::MatrixXd X = standardize_apply(model.stats, features);
    std::vector<int> y = label_indices(labels);

    auto class_weights = balanced_class_weights(labels);
    Eigen::VectorXd wts(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) wts[static_cast<Eigen::Index>(i)] =
        class_weights[labels[i]];

    const Eigen::Index d = X.cols();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(kParadigmCount, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(kParadigmCount);

    Eigen::MatrixXd gW;
    Eigen::VectorXd gb;
    double loss = lr_loss_and_grad(X, y, wts, opt.l2, W, b, &gW, &gb);
    double step = 1.0;
    for (int iter = 0; iter < opt.max_iter; ++iter) {
        // backtracking keeps plain gradient descent stable without tuning
        Eigen::MatrixXd W_next;
        Eigen::VectorXd b_next;
        double next_loss = loss;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            W_next = W - step * gW;
            b_next = b - step * gb;
            next_loss = lr_loss_and_grad(X, y, wts, opt.l2, W_next, b_next, nullptr, nullptr);
            if (next_loss <= loss) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        W = std::move(W_next);
        b = std::move(b_next);
        const double delta = loss - next_loss;
        loss = next_loss;
        if (delta <= opt.tol) break;
        lr_loss_and_grad(X, y, wts, opt.l2, W, b, &gW, &gb);
        step = std::min(step * 1.1, 16.0);
    }

    model.weights = {W};
    model.biases = {b};
    return model;
}

// ---------------------------------------------------------------------------
// MLP

namespace {

Eigen::MatrixXd he_init(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = scale * rng.normal();
        }
    }
    return m;
}

struct MlpForward {
    Eigen::MatrixXd h1, h2, z;  // post-activation (and post-dropout when training)
    Eigen::MatrixXd mask1, mask2;
};

MlpForward mlp_forward(const std::vector<Eigen::MatrixXd>& W,
                       const std::vector<Eigen::VectorXd>& b, const Eigen::MatrixXd& X,
                       double dropout, SplitMix64* rng) {
    MlpForward f;
    f.h1 = (X * W[0].transpose()).rowwise() + b[0].transpose();
    f.h1 = f.h1.cwiseMax(0.0);
    if (rng && dropout > 0.0) {
        const double keep = 1.0 - dropout;
        f.mask1 = Eigen::MatrixXd::Zero(f.h1.rows(), f.h1.cols());
        for (Eigen::Index i = 0; i < f.mask1.rows(); ++i) {
            for (Eigen::Index j = 0; j < f.mask1.cols(); ++j) {
                f.mask1(i, j) = rng->uniform01() < keep ? 1.0 / keep : 0.0;
            }
        }
        f.h1 = f.h1.cwiseProduct(f.mask1);
    }
    f.h2 = (f.h1 * W[1].transpose()).rowwise() + b[1].transpose();
    f.h2 = f.h2.cwiseMax(0.0);
    if (rng && dropout > 0.0) {
        const double keep = 1.0 - dropout;
        f.mask2 = Eigen::MatrixXd::Zero(f.h2.rows(), f.h2.cols());
        for (Eigen::Index i = 0; i < f.mask2.rows(); ++i) {
            for (Eigen::Index j = 0; j < f.mask2.cols(); ++j) {
                f.mask2(i, j) = rng->uniform01() < keep ? 1.0 / keep : 0.0;
            }
        }
        f.h2 = f.h2.cwiseProduct(f.mask2);
    }
    f.z = (f.h2 * W[2].transpose()).rowwise() + b[2].transpose();
    return f;
}

double softmax_ce(const Eigen::MatrixXd& Z, const std::vector<int>& y, Eigen::MatrixXd* dZ) {
    const Eigen::Index n = Z.rows();
    Eigen::VectorXd row_max = Z.rowwise().maxCoeff();
    Eigen::MatrixXd E = (Z.colwise() - row_max).array().exp();
    Eigen::VectorXd row_sum = E.rowwise().sum();
    Eigen::MatrixXd P = E.array().colwise() / row_sum.array();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        loss -= std::log(std::max(P(i, y[static_cast<size_t>(i)]), 1e-300));
    }
    loss /= static_cast<double>(n);
    if (dZ) {
        *dZ = P;
        for (Eigen::Index i = 0; i < n; ++i) {
            (*dZ)(i, y[static_cast<size_t>(i)]) -= 1.0;
        }
        *dZ /= static_cast<double>(n);
    }
    return loss;
}

void mlp_backward(const std::vector<Eigen::MatrixXd>& W, const Eigen::MatrixXd& X,
                  const MlpForward& f, const Eigen::MatrixXd& dZ,
                  std::vector<Eigen::MatrixXd>* grad_W, std::vector<Eigen::VectorXd>* grad_b) {
    grad_W->assign(3, Eigen::MatrixXd());
    grad_b->assign(3, Eigen::VectorXd());
    (*grad_W)[2] = dZ.transpose() * f.h2;
    (*grad_b)[2] = dZ.colwise().sum().transpose();

    Eigen::MatrixXd dh2 = dZ * W[2];
    if (f.mask2.size() > 0) dh2 = dh2.cwiseProduct(f.mask2);
    // relu derivative on the pre-dropout activation sign: h2>0 iff pre-relu>0
    dh2 = (f.h2.array() > 0.0).select(dh2, 0.0);
    (*grad_W)[1] = dh2.transpose() * f.h1;
    (*grad_b)[1] = dh2.colwise().sum().transpose();

    Eigen::MatrixXd dh1 = dh2 * W[1];
    if (f.mask1.size() > 0) dh1 = dh1.cwiseProduct(f.mask1);
    dh1 = (f.h1.array() > 0.0).select(dh1, 0.0);
    (*grad_W)[0] = dh1.transpose() * X;
    (*grad_b)[0] = dh1.colwise().sum().transpose();
}

struct AdamState {
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;
    int64_t t = 0;
};

void adam_step(std::vector<Eigen::MatrixXd>& W, std::vector<Eigen::VectorXd>& b,
               const std::vector<Eigen::MatrixXd>& gW, const std::vector<Eigen::VectorXd>& gb,
               AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t l = 0; l < W.size(); ++l) {
        state.mW[l] = beta1 * state.mW[l] + (1.0 - beta1) * gW[l];
        state.vW[l] = beta2 * state.vW[l].array().matrix() +
                      (1.0 - beta2) * gW[l].array().square().matrix();
        Eigen::MatrixXd mhat = state.mW[l] / bc1;
        Eigen::MatrixXd vhat = state.vW[l] / bc2;
        W[l] -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();

        state.mb[l] = beta1 * state.mb[l] + (1.0 - beta1) * gb[l];
        state.vb[l] = beta2 * state.vb[l].array().matrix() +
                      (1.0 - beta2) * gb[l].array().square().matrix();
        Eigen::VectorXd mbh = state.mb[l] / bc1;
        Eigen::VectorXd vbh = state.vb[l] / bc2;
        b[l] -= lr * (mbh.array() / (vbh.array().sqrt() + eps)).matrix();
    }
}

}  // namespace

double mlp_loss_and_grad(const RouterModel& model, const Eigen::MatrixXd& X,
                         const std::vector<int>& y, std::vector<Eigen::MatrixXd>* grad_W,
                         std::vector<Eigen::VectorXd>* grad_b) {
    MlpForward f = mlp_forward(model.weights, model.biases, X, 0.0, nullptr);
    Eigen::MatrixXd dZ;
    double loss = softmax_ce(f.z, y, (grad_W || grad_b) ? &dZ : nullptr);
    if (grad_W && grad_b) {
        mlp_backward(model.weights, X, f, dZ, grad_W, grad_b);
    }
    return loss;
}

RouterModel train_mlp(const Eigen::MatrixXd& features, const std::vector<ParadigmId>& labels,
                      uint64_t seed, const MlpOptions& opt) {
    check_trainable(labels);
    if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw std::invalid_argument("features/labels size mismatch");
    }
    RouterModel model;
    model.kind = RouterModel::Kind::MLP;
    model.seed = seed;
    model.stats = standardize_fit(features);
    Eigen::MatrixXd X = standardize_apply(model.stats, features);
    std::vector<int> y = label_indices(labels);
    const Eigen::Index d = X.cols();

    // stratified validation slice of the training set (never the test set)
    SplitMix64 val_rng(fnv1a64("mlp-val", seed));
    std::vector<size_t> train_idx, val_idx;
    {
        std::map<int, std::vector<size_t>> by_class;
        for (size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
        for (auto& [cls, idx] : by_class) {
            deterministic_shuffle(idx, val_rng.next());
            size_t n_val = static_cast<size_t>(
                std::floor(opt.val_fraction * static_cast<double>(idx.size())));
            for (size_t i = 0; i < idx.size(); ++i) {
                (i < n_val ? val_idx : train_idx).push_back(idx[i]);
            }
        }
        if (val_idx.empty() && train_idx.size() > 1) {
            val_idx.push_back(train_idx.back());
            train_idx.pop_back();
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
    }

    auto slice = [&](const std::vector<size_t>& idx, Eigen::MatrixXd* Xs, std::vector<int>* ys) {
        Xs->resize(static_cast<Eigen::Index>(idx.size()), d);
        ys->clear();
        for (size_t i = 0; i < idx.size(); ++i) {
            Xs->row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
            ys->push_back(y[idx[i]]);
        }
    };
    Eigen::MatrixXd X_train, X_val;
    std::vector<int> y_train, y_val;
    slice(train_idx, &X_train, &y_train);
    slice(val_idx, &X_val, &y_val);

    SplitMix64 init_rng(fnv1a64("mlp-init", seed));
    std::vector<Eigen::MatrixXd> W = {he_init(opt.hidden1, d, init_rng),
                                      he_init(opt.hidden2, opt.hidden1, init_rng),
                                      he_init(kParadigmCount, opt.hidden2, init_rng)};
    std::vector<Eigen::VectorXd> b = {Eigen::VectorXd::Zero(opt.hidden1),
                                      Eigen::VectorXd::Zero(opt.hidden2),
                                      Eigen::VectorXd::Zero(kParadigmCount)};

    AdamState adam;
    for (const auto& w : W) {
        adam.mW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        adam.vW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& bias : b) {
        adam.mb.push_back(Eigen::VectorXd::Zero(bias.size()));
        adam.vb.push_back(Eigen::VectorXd::Zero(bias.size()));
    }

    SplitMix64 shuffle_rng(fnv1a64("mlp-shuffle", seed));
    SplitMix64 dropout_rng(fnv1a64("mlp-dropout", seed));

    std::vector<Eigen::MatrixXd> best_W = W;
    std::vector<Eigen::VectorXd> best_b = b;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    const Eigen::Index n_train = X_train.rows();
    std::vector<size_t> order(static_cast<size_t>(n_train));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        deterministic_shuffle(order, shuffle_rng.next());
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(opt.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(opt.batch_size));
            Eigen::MatrixXd Xb(static_cast<Eigen::Index>(end - start), d);
            std::vector<int> yb;
            for (size_t i = start; i < end; ++i) {
                Xb.row(static_cast<Eigen::Index>(i - start)) =
                    X_train.row(static_cast<Eigen::Index>(order[i]));
                yb.push_back(y_train[order[i]]);
            }
            MlpForward f = mlp_forward(W, b, Xb, opt.dropout, &dropout_rng);
            Eigen::MatrixXd dZ;
            softmax_ce(f.z, yb, &dZ);
            std::vector<Eigen::MatrixXd> gW;
            std::vector<Eigen::VectorXd> gb;
            mlp_backward(W, Xb, f, dZ, &gW, &gb);
            adam_step(W, b, gW, gb, adam, opt.learning_rate);
        }
        // early stopping on validation loss (dropout off)
        MlpForward fv = mlp_forward(W, b, X_val, 0.0, nullptr);
        double val_loss = softmax_ce(fv.z, y_val, nullptr);
        if (val_loss < best_val - 1e-12) {
            best_val = val_loss;
            best_W = W;
            best_b = b;
            since_best = 0;
        } else if (++since_best >= opt.patience) {
            break;
        }
    }

    model.weights = std::move(best_W);
    model.biases = std::move(best_b);
    return model;
}

// ---------------------------------------------------------------------------
// Prediction

Eigen::VectorXd RouterModel::scores(const Eigen::VectorXd& features) const {
    Eigen::VectorXd x = standardize_apply(stats, features);
    if (kind == Kind::LR) {
        return weights[0] * x + biases[0];
    }
    Eigen::VectorXd h1 = (weights[0] * x + biases[0]).cwiseMax(0.0);
    Eigen::VectorXd h2 = (weights[1] * h1 + biases[1]).cwiseMax(0.0);
    return weights[2] * h2 + biases[2];
}

ParadigmId predict(const RouterModel& model, const Task& task, const EmbedFn& embed_fn) {
    Eigen::VectorXd f = task_features(task, model.layout, model.embedding_dim, embed_fn);
    Eigen::VectorXd s = model.scores(f);
    int best = 0;
    for (int c = 1; c < kParadigmCount; ++c) {
        if (s[c] > s[best]) best = c;  // ties keep the lower canonical rank
    }
    return static_cast<ParadigmId>(best);
}

double downstream_accuracy(const RouterModel& model, const RunMatrix& matrix,
                           const std::string& model_name, const std::vector<Task>& test_tasks,
                           const EmbedFn& embed_fn) {
    if (test_tasks.empty()) return 0.0;
    size_t correct = 0;
    for (const Task& task : test_tasks) {
        if (!task.dataset) continue;
        ParadigmId chosen = predict(model, task, embed_fn);
        const RunRecord* r = matrix.find(RunKey{model_name, chosen, *task.dataset, task.id});
        if (r && r->success) ++correct;  // missing record counts as incorrect
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(test_tasks.size());
}

// ---------------------------------------------------------------------------
// Self-routing and distribution

SelfRouteResult self_route(const Task& task, Backend& backend, const std::string& model_name) {
    ChatRequest req;
    req.model = model_name;
    req.temperature = 0.0;
    req.messages.push_back({"system", default_prompt_template(PromptKind::SelfRoute)});
    req.messages.push_back({"user", render_task_user_message(task)});
    ChatResponse resp = backend.chat(req);

    SelfRouteResult result;
    if (auto boxed = extract_boxed(resp.content)) {
        if (auto p = parse_paradigm(trim(*boxed))) {
            result.paradigm = *p;
            return result;
        }
    }
    result.paradigm = ParadigmId::Direct;
    result.parse_failed = true;
    return result;
}

std::map<ParadigmId, double> distribution_report(const std::vector<ParadigmId>& predictions) {
    if (predictions.empty()) {
        throw std::invalid_argument("distribution_report needs at least one prediction");
    }
    std::map<ParadigmId, double> dist;
    for (ParadigmId p : all_paradigms()) dist[p] = 0.0;
    for (ParadigmId p : predictions) dist[p] += 1.0;
    for (auto& [p, v] : dist) v = 100.0 * v / static_cast<double>(predictions.size());
    return dist;
}

Table distribution_table(const std::map<ParadigmId, double>& dist, const std::string& name) {
    Table t;
    t.name = name;
    t.columns = {"paradigm", "percent"};
    for (ParadigmId p : all_paradigms()) {
        auto it = dist.find(p);
        t.rows.push_back({paradigm_name(p), format_double(it == dist.end() ? 0.0 : it->second)});
    }
    return t;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = j[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
    return v;
}

}  // namespace

json router_model_to_json(const RouterModel& model) {
    json weights = json::array();
    for (const auto& w : model.weights) weights.push_back(matrix_to_json(w));
    json biases = json::array();
    for (const auto& b : model.biases) biases.push_back(vector_to_json(b));
    json classes = json::array();
    for (ParadigmId p : all_paradigms()) classes.push_back(paradigm_name(p));
    return json{{"kind", model.kind == RouterModel::Kind::LR ? "lr" : "mlp"},
                {"layout", feature_layout_name(model.layout)},
                {"embedding_dim", model.embedding_dim},
                {"standardize", {{"mean", vector_to_json(model.stats.mean)},
                                 {"std", vector_to_json(model.stats.std)}}},
                {"weights", weights},
                {"biases", biases},
                {"classes", classes},
                {"seed", model.seed}};
}

RouterModel router_model_from_json(const json& j) {
    RouterModel model;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "lr") {
        model.kind = RouterModel::Kind::LR;
    } else if (kind == "mlp") {
        model.kind = RouterModel::Kind::MLP;
    } else {
        throw std::runtime_error("unknown router kind: " + kind);
    }
    auto layout = parse_feature_layout(j.at("layout").get<std::string>());
    if (!layout) throw std::runtime_error("unknown feature layout");
    model.layout = *layout;
    model.embedding_dim = j.value("embedding_dim", kDefaultEmbeddingDims);
    model.stats.mean = vector_from_json(j.at("standardize").at("mean"));
    model.stats.std = vector_from_json(j.at("standardize").at("std"));
    for (const auto& w : j.at("weights")) model.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) model.biases.push_back(vector_from_json(b));
    model.seed = j.value("seed", uint64_t{42});
    return model;
}

void save_router_model(const std::string& path, const RouterModel& model) {
    std::ofstream out(path, std::ios::trunc);
    out << router_model_to_json(model).dump() << "\n";
    if (!out) throw std::runtime_error("cannot write router model: " + path);
}

RouterModel load_router_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read router model: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("router model is not valid JSON: " + path);
    return router_model_from_json(j);
}

// ---------------------------------------------------------------------------
// Embedding cache

EmbeddingCache::EmbeddingCache(std::string path, std::string model_name)
    : path_(std::move(path)), model_name_(std::move(model_name)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        std::vector<double> values;
        for (const auto& x : j.at("values")) values.push_back(x.get<double>());
        entries_[j.value("fingerprint", "")] = std::move(values);
    }
}

std::vector<double> EmbeddingCache::get_or_compute(const std::string& text, Backend& backend) {
    const std::string fp = embed_fingerprint(model_name_, text);
    auto it = entries_.find(fp);
    if (it != entries_.end()) return it->second;
    EmbeddingVector v = backend.embed(text);
    entries_[fp] = v.values;
    std::ofstream out(path_, std::ios::app);
    if (out) {
        out << json{{"fingerprint", fp}, {"values", v.values}}.dump() << "\n";
    }
    return v.values;
}

}  // namespace pb
