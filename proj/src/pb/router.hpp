#pragma once
// Select-then-solve router: feature pipeline, label construction, stratified
// split, LR/MLP classifiers, downstream evaluation and zero-shot self-routing.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pb/backend.hpp"
#include "pb/core.hpp"
#include "pb/reports.hpp"

namespace pb {

inline constexpr int kHandcraftedDims = 22;
inline constexpr int kDefaultEmbeddingDims = 1536;

enum class FeatureLayout { Handcrafted, Embedding, Combined };
std::string feature_layout_name(FeatureLayout layout);
std::optional<FeatureLayout> parse_feature_layout(const std::string& name);
int feature_dims(FeatureLayout layout, int embedding_dim);

// dims 0-9 dataset one-hot; 10 char length; 11 word count; 12 line count;
// 13 average word length; 14 has_code; 15 has_math; 16 has_choices;
// 17-21 question-type indicators (what | which,who | when,where | how | why).
Eigen::VectorXd handcrafted_features(const Task& task);

using EmbedFn = std::function<std::vector<double>(const std::string& text)>;

// Embedding layouts place the embedding first, then the handcrafted block.
Eigen::VectorXd task_features(const Task& task, FeatureLayout layout, int embedding_dim,
                              const EmbedFn& embed_fn);

// --- labels -----------------------------------------------------------------

struct LabeledExample {
    const Task* task = nullptr;
    ParadigmId label = ParadigmId::Direct;
    int64_t tokens_of_label = 0;
};

struct LabelSet {
    std::vector<LabeledExample> labeled;
    std::vector<const Task*> unwinnable;  // kept in evaluation, excluded from training
};

// Label = successful paradigm with minimum tokens_total; ties break by
// canonical order. Missing paradigm records count as failures.
LabelSet build_labels(const RunMatrix& matrix, const std::string& model,
                      const std::vector<Task>& tasks);

// 70/30 within each dataset, deterministic in (task ids, seed) only, so the
// same split is shared across models.
std::pair<std::vector<Task>, std::vector<Task>> split_stratified(const std::vector<Task>& tasks,
                                                                 double train_frac = 0.7,
                                                                 uint64_t seed = 42);

// --- standardization ----------------------------------------------------------

struct StandardizeStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;  // population std; zero-variance features map to 0
};
StandardizeStats standardize_fit(const Eigen::MatrixXd& train_features);  // rows = examples
Eigen::VectorXd standardize_apply(const StandardizeStats& stats, const Eigen::VectorXd& v);
Eigen::MatrixXd standardize_apply(const StandardizeStats& stats, const Eigen::MatrixXd& rows);

// --- classifiers ---------------------------------------------------------------

struct RouterModel {
    enum class Kind { LR, MLP };
    Kind kind = Kind::LR;
    FeatureLayout layout = FeatureLayout::Handcrafted;
    int embedding_dim = kDefaultEmbeddingDims;
    StandardizeStats stats;
    // LR: weights = {W (6 x d)}, biases = {b (6)}
    // MLP: weights = {W1 (128 x d), W2 (64 x 128), W3 (6 x 64)} with matching biases
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    uint64_t seed = 42;

    // class scores for a raw (unstandardized) feature vector
    Eigen::VectorXd scores(const Eigen::VectorXd& features) const;
};

struct LrOptions {
    double l2 = 1.0;
    double tol = 1e-6;
    int max_iter = 2000;
};

struct MlpOptions {
    int hidden1 = 128;
    int hidden2 = 64;
    double dropout = 0.3;
    double learning_rate = 5e-4;
    int batch_size = 32;
    int max_epochs = 500;
    int patience = 15;
    double val_fraction = 0.1;
};

// Class-weighted multinomial softmax (w_c = n / (k * n_c)) trained by
// deterministic full-batch gradient descent with L2 regularization.
RouterModel train_lr(const Eigen::MatrixXd& features, const std::vector<ParadigmId>& labels,
                     uint64_t seed, const LrOptions& opt = {});

// d -> 128 -> 64 -> 6 rectifier MLP, dropout 0.3, Adam, early stopping on a
// stratified validation slice of the training set. Fully seed-deterministic.
RouterModel train_mlp(const Eigen::MatrixXd& features, const std::vector<ParadigmId>& labels,
                      uint64_t seed, const MlpOptions& opt = {});

// Class weights w_c = n/(k*n_c) over the classes present.
std::map<ParadigmId, double> balanced_class_weights(const std::vector<ParadigmId>& labels);

// Weighted LR loss + analytic gradient at (W, b); exposed for gradient checks.
double lr_loss_and_grad(const Eigen::MatrixXd& X, const std::vector<int>& y,
                        const Eigen::VectorXd& example_weights, double l2,
                        const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                        Eigen::MatrixXd* grad_W, Eigen::VectorXd* grad_b);

// MLP loss + gradients with dropout off; exposed for gradient checks.
double mlp_loss_and_grad(const RouterModel& model, const Eigen::MatrixXd& X,
                         const std::vector<int>& y, std::vector<Eigen::MatrixXd>* grad_W,
                         std::vector<Eigen::VectorXd>* grad_b);

ParadigmId predict(const RouterModel& model, const Task& task, const EmbedFn& embed_fn);

// Fraction of test tasks whose predicted paradigm has a successful record.
// Missing records and unwinnable tasks count as incorrect.
double downstream_accuracy(const RouterModel& model, const RunMatrix& matrix,
                           const std::string& model_name, const std::vector<Task>& test_tasks,
                           const EmbedFn& embed_fn);

// --- self-routing & reports -----------------------------------------------------

struct SelfRouteResult {
    ParadigmId paradigm = ParadigmId::Direct;
    bool parse_failed = false;
};
SelfRouteResult self_route(const Task& task, Backend& backend, const std::string& model_name);

std::map<ParadigmId, double> distribution_report(const std::vector<ParadigmId>& predictions);
Table distribution_table(const std::map<ParadigmId, double>& dist, const std::string& name);

// --- persistence -----------------------------------------------------------------

nlohmann::json router_model_to_json(const RouterModel& model);
RouterModel router_model_from_json(const nlohmann::json& j);
void save_router_model(const std::string& path, const RouterModel& model);
RouterModel load_router_model(const std::string& path);

// File-backed embedding store keyed by text fingerprint; reruns make zero
// embedding calls for cached texts.
class EmbeddingCache {
  public:
    EmbeddingCache(std::string path, std::string model_name);
    std::vector<double> get_or_compute(const std::string& text, Backend& backend);
    size_t size() const { return entries_.size(); }

  private:
    std::string path_;
    std::string model_name_;
    std::map<std::string, std::vector<double>> entries_;
};

}  // namespace pb
