#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ssi/features.hpp"

namespace ssi::models {

inline constexpr int kModelVersion = 1;

struct LogRegParams {
    double l2_lambda = 1e-2;
    int max_iters = 20000;
    double tolerance = 1e-6;
};

struct LogRegModel {
    std::vector<std::string> feature_names;
    std::vector<double> weights;
    double bias = 0.0;
    double l2_lambda = 1e-2;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;

    double score(std::span<const double> x) const;
};

/// Mean logistic loss plus (lambda/2)||w||^2; the bias is not penalized.
double logreg_loss(const features::FeatureMatrix& x, std::span<const int> y, std::span<const double> w, double bias,
                   double lambda);

/// Same objective with its analytic gradient written into `grad_w`/`grad_b`.
double logreg_loss_and_gradient(const features::FeatureMatrix& x, std::span<const int> y, std::span<const double> w,
                                double bias, double lambda, std::vector<double>& grad_w, double& grad_b);

/// Full-batch gradient descent with Armijo backtracking. Hitting max_iters is
/// reported in the model, not raised.
LogRegModel train_logreg(const features::FeatureMatrix& x, std::span<const int> y, const LogRegParams& params = {});

/// Flat binary tree; a node with feature < 0 is a leaf holding the positive
/// fraction of its training samples. Samples go left when x[feature] <= threshold.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    bool operator==(const DecisionTree&) const = default;
};

struct ForestParams {
    int n_trees = 100;
    int max_depth = 8;
    int features_per_split = 0;  ///< 0 selects ceil(sqrt(n_features))
    int min_samples_split = 2;
    std::uint64_t seed = 0;
};

struct RandomForestModel {
    std::vector<std::string> feature_names;
    std::vector<DecisionTree> trees;
    ForestParams params;

    double score(std::span<const double> x) const;
};

/// Bootstrap-sampled Gini trees over a random feature subset per node. Each
/// tree draws from its own seed-derived stream, so the result does not depend
/// on how trees are scheduled across threads.
RandomForestModel train_forest(const features::FeatureMatrix& x, std::span<const int> y,
                               const ForestParams& params = {});

using BaseModel = std::variant<LogRegModel, RandomForestModel>;

const std::vector<std::string>& feature_names(const BaseModel& m);
std::string_view kind_name(const BaseModel& m);

/// Probabilities in [0,1]. Columns are matched by name; a missing or extra
/// column is an error naming it.
std::vector<double> predict_proba(const BaseModel& model, const features::FeatureMatrix& x);

struct Fingerprint {
    std::string dataset;  ///< hash of the training matrix
    std::string config;   ///< hash of the feature configuration

    bool operator==(const Fingerprint&) const = default;
};

std::string dataset_hash(const features::FeatureMatrix& x);

struct CalibratedModel {
    BaseModel base;
    /// Minimum predicted probability over calibration positives; absent for
    /// a trained but not yet calibrated model.
    std::optional<double> threshold;
    Fingerprint fingerprint;
};

/// threshold = min over positive rows of predict_proba.
CalibratedModel calibrate(BaseModel model, const features::FeatureMatrix& x, std::span<const int> y,
                          std::string config_hash = {});

struct Prediction {
    std::string procedure_id;
    double probability = 0.0;
    bool flagged = false;

    bool operator==(const Prediction&) const = default;
};

/// flagged = probability >= threshold.
std::vector<Prediction> flag(const CalibratedModel& model, const features::FeatureMatrix& x);

/// A message when the scoring feature configuration differs from training.
std::optional<std::string> fingerprint_warning(const CalibratedModel& model, std::string_view config_hash);

std::string to_json(const CalibratedModel& model);
CalibratedModel model_from_json(std::string_view json_text);
void save_model(const CalibratedModel& model, const std::filesystem::path& path);
CalibratedModel load_model(const std::filesystem::path& path);

std::string predictions_jsonl(const std::vector<Prediction>& predictions);
std::vector<Prediction> parse_predictions(std::string_view jsonl, const std::string& source = "predictions");

}  // namespace ssi::models
