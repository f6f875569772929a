#include "ssi/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <json.hpp>

#include "ssi/corpus.hpp"
#include "ssi/error.hpp"
#include "ssi/hash.hpp"

namespace ssi::models {

using features::FeatureMatrix;
using nlohmann::json;

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_training_input(const FeatureMatrix& x, std::span<const int> y) {
    if (x.rows() != y.size()) throw ValidationError("label count does not match matrix rows");
    bool pos = false, neg = false;
    for (int v : y) (v ? pos : neg) = true;
    if (!pos || !neg) throw ValidationError("training needs at least one positive and one negative row");
    for (double v : x.values())
        if (!std::isfinite(v)) throw ValidationError("feature matrix contains non-finite values");
}

double affine(std::span<const double> w, double b, std::span<const double> row) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * row[j];
    return z;
}

}  // namespace

double LogRegModel::score(std::span<const double> x) const { return sigmoid(affine(weights, bias, x)); }

double logreg_loss(const FeatureMatrix& x, std::span<const int> y, std::span<const double> w, double bias,
                   double lambda) {
    double sum = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double z = affine(w, bias, x.row(r));
        sum += softplus(z) - (y[r] ? z : 0.0);
    }
    double reg = 0.0;
    for (double v : w) reg += v * v;
    return sum / static_cast<double>(x.rows()) + 0.5 * lambda * reg;
}

double logreg_loss_and_gradient(const FeatureMatrix& x, std::span<const int> y, std::span<const double> w,
                                double bias, double lambda, std::vector<double>& grad_w, double& grad_b) {
    const std::size_t p = x.cols();
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    grad_w.assign(p, 0.0);
    grad_b = 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        const double z = affine(w, bias, row);
        sum += softplus(z) - (y[r] ? z : 0.0);
        const double residual = sigmoid(z) - y[r];
        for (std::size_t j = 0; j < p; ++j) grad_w[j] += residual * row[j];
        grad_b += residual;
    }
    double reg = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        grad_w[j] = grad_w[j] * inv_n + lambda * w[j];
        reg += w[j] * w[j];
    }
    grad_b *= inv_n;
    return sum * inv_n + 0.5 * lambda * reg;
}

LogRegModel train_logreg(const FeatureMatrix& x, std::span<const int> y, const LogRegParams& params) {
    check_training_input(x, y);
    if (!(params.l2_lambda >= 0)) throw ValidationError("l2_lambda must be >= 0");
    if (params.max_iters < 0) throw ValidationError("max_iters must be >= 0");

    const std::size_t p = x.cols();
    LogRegModel m;
    m.feature_names = x.columns();
    m.weights.assign(p, 0.0);
    m.l2_lambda = params.l2_lambda;

    std::vector<double> gw, trial_w(p);
    double gb = 0.0;
    double loss = logreg_loss_and_gradient(x, y, m.weights, m.bias, params.l2_lambda, gw, gb);
    double step = 1.0;
    int it = 0;
    for (; it < params.max_iters; ++it) {
        double g2 = gb * gb;
        for (double g : gw) g2 += g * g;
        m.gradient_norm = std::sqrt(g2);
        if (m.gradient_norm < params.tolerance) {
            m.converged = true;
            break;
        }
        // Armijo backtracking; the accepted step seeds the next iteration with
        // room to grow.
        step = std::min(step * 2.0, 1e6);
        double trial_loss = 0.0;
        for (;;) {
            for (std::size_t j = 0; j < p; ++j) trial_w[j] = m.weights[j] - step * gw[j];
            const double trial_b = m.bias - step * gb;
            trial_loss = logreg_loss(x, y, trial_w, trial_b, params.l2_lambda);
            if (trial_loss <= loss - 0.5 * step * g2 || step < 1e-20) break;
            step *= 0.5;
        }
        // No representable decrease left: further iterations cannot help.
        if (step < 1e-20 || !(trial_loss < loss)) break;
        m.weights.swap(trial_w);
        m.bias -= step * gb;
        loss = logreg_loss_and_gradient(x, y, m.weights, m.bias, params.l2_lambda, gw, gb);
    }
    if (!m.converged) {
        double g2 = gb * gb;
        for (double g : gw) g2 += g * g;
        m.gradient_norm = std::sqrt(g2);
        m.converged = m.gradient_norm < params.tolerance;
    }
    m.iterations = it;
    return m;
}

// ---------------------------------------------------------------------------
// Random forest

double DecisionTree::predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

double RandomForestModel::score(std::span<const double> x) const {
    if (trees.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Unbiased draw in [0, n) independent of the standard library's distributions.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do v = rng();
    while (v >= limit);
    return static_cast<std::size_t>(v % bound);
}

double gini(double pos, double n) {
    if (n <= 0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, std::span<const int> y, const ForestParams& params, int mtry,
                std::uint64_t seed)
        : x_(x), y_(y), params_(params), mtry_(mtry), rng_(seed), feature_pool_(x.cols()) {
        std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
    }

    DecisionTree build() {
        const std::size_t n = x_.rows();
        std::vector<std::size_t> sample(n);
        for (auto& s : sample) s = uniform_index(rng_, n);
        tree_.nodes.clear();
        grow(sample, 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& idx, int depth) {
        const int node_id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::size_t pos = 0;
        for (auto i : idx) pos += static_cast<std::size_t>(y_[i]);
        const double n = static_cast<double>(idx.size());
        tree_.nodes[static_cast<std::size_t>(node_id)].value = n > 0 ? static_cast<double>(pos) / n : 0.0;
        if (depth >= params_.max_depth || pos == 0 || pos == idx.size() ||
            idx.size() < static_cast<std::size_t>(std::max(2, params_.min_samples_split)))
            return node_id;

        const double parent = gini(static_cast<double>(pos), n);
        int best_feature = -1;
        double best_threshold = 0.0, best_gain = 1e-12;

        // Partial Fisher-Yates draw of the candidate features.
        const std::size_t p = feature_pool_.size();
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(mtry_), p);
        for (std::size_t j = 0; j < k; ++j) std::swap(feature_pool_[j], feature_pool_[j + uniform_index(rng_, p - j)]);
        std::vector<std::pair<double, int>> column(idx.size());
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t f = feature_pool_[j];
            for (std::size_t r = 0; r < idx.size(); ++r) column[r] = {x_.at(idx[r], f), y_[idx[r]]};
            std::ranges::sort(column);
            double left_n = 0, left_pos = 0;
            for (std::size_t r = 0; r + 1 < column.size(); ++r) {
                left_n += 1;
                left_pos += column[r].second;
                if (column[r].first == column[r + 1].first) continue;
                const double right_n = n - left_n;
                const double right_pos = static_cast<double>(pos) - left_pos;
                const double child = (left_n * gini(left_pos, left_n) + right_n * gini(right_pos, right_n)) / n;
                const double gain = parent - child;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (column[r].first + column[r + 1].first);
                }
            }
        }
        if (best_feature < 0) return node_id;

        std::vector<std::size_t> left, right;
        for (auto i : idx) (x_.at(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(node_id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return node_id;
    }

    const FeatureMatrix& x_;
    std::span<const int> y_;
    const ForestParams& params_;
    int mtry_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> feature_pool_;
    DecisionTree tree_;
};

}  // namespace

RandomForestModel train_forest(const FeatureMatrix& x, std::span<const int> y, const ForestParams& params) {
    check_training_input(x, y);
    if (params.n_trees < 1) throw ValidationError("n_trees must be >= 1");
    if (params.max_depth < 0) throw ValidationError("max_depth must be >= 0");
    if (x.cols() == 0) throw ValidationError("forest needs at least one feature");

    RandomForestModel m;
    m.feature_names = x.columns();
    m.params = params;
    const int mtry = params.features_per_split > 0
                         ? params.features_per_split
                         : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
    m.params.features_per_split = mtry;
    m.trees.resize(static_cast<std::size_t>(params.n_trees));

    auto build_range = [&](std::size_t first, std::size_t stride) {
        for (std::size_t t = first; t < m.trees.size(); t += stride) {
            TreeBuilder b(x, y, m.params, mtry, splitmix64(params.seed ^ splitmix64(t)));
            m.trees[t] = b.build();
        }
    };
    const std::size_t workers =
        std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, m.trees.size());
    if (workers == 1) {
        build_range(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(build_range, w, workers);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Scoring

const std::vector<std::string>& feature_names(const BaseModel& m) {
    return std::visit([](const auto& v) -> const std::vector<std::string>& { return v.feature_names; }, m);
}

std::string_view kind_name(const BaseModel& m) {
    return std::holds_alternative<LogRegModel>(m) ? "logistic_regression" : "random_forest";
}

std::vector<double> predict_proba(const BaseModel& model, const FeatureMatrix& x) {
    const auto& names = feature_names(model);
    std::map<std::string_view, std::size_t> col_of;
    for (std::size_t c = 0; c < x.cols(); ++c) col_of.emplace(x.columns()[c], c);
    std::vector<std::string> missing, extra;
    std::vector<std::size_t> order;
    order.reserve(names.size());
    for (const auto& n : names) {
        auto it = col_of.find(n);
        if (it == col_of.end()) missing.push_back(n);
        else order.push_back(it->second);
    }
    const std::set<std::string_view> known(names.begin(), names.end());
    for (const auto& c : x.columns())
        if (!known.contains(c)) extra.push_back(c);
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "feature mismatch;";
        if (!missing.empty()) {
            msg += " missing:";
            for (const auto& m : missing) msg += " \"" + m + "\"";
        }
        if (!extra.empty()) {
            msg += " extra:";
            for (const auto& e : extra) msg += " \"" + e + "\"";
        }
        throw ValidationError(msg);
    }

    std::vector<double> out(x.rows());
    std::vector<double> row(names.size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t j = 0; j < order.size(); ++j) row[j] = x.at(r, order[j]);
        out[r] = std::visit([&](const auto& m) { return m.score(row); }, model);
    }
    return out;
}

std::string dataset_hash(const FeatureMatrix& x) { return hash::hex64(hash::fnv1a(x.to_csv())); }

CalibratedModel calibrate(BaseModel model, const FeatureMatrix& x, std::span<const int> y, std::string config_hash) {
    if (x.rows() != y.size()) throw ValidationError("label count does not match matrix rows");
    const auto probs = predict_proba(model, x);
    std::optional<double> threshold;
    for (std::size_t r = 0; r < probs.size(); ++r)
        if (y[r] && (!threshold || probs[r] < *threshold)) threshold = probs[r];
    if (!threshold) throw ValidationError("calibration set has no positive rows");
    return CalibratedModel{std::move(model), threshold, Fingerprint{dataset_hash(x), std::move(config_hash)}};
}

std::vector<Prediction> flag(const CalibratedModel& model, const FeatureMatrix& x) {
    if (!model.threshold) throw ValidationError("model is not calibrated");
    const auto probs = predict_proba(model.base, x);
    std::vector<Prediction> out;
    out.reserve(probs.size());
    for (std::size_t r = 0; r < probs.size(); ++r)
        out.push_back({x.row_ids()[r], probs[r], probs[r] >= *model.threshold});
    return out;
}

std::optional<std::string> fingerprint_warning(const CalibratedModel& model, std::string_view config_hash) {
    if (model.fingerprint.config.empty() || model.fingerprint.config == config_hash) return std::nullopt;
    return "feature configuration " + std::string(config_hash) + " differs from the one the model was trained on (" +
           model.fingerprint.config + ")";
}

// ---------------------------------------------------------------------------
// Persistence

std::string to_json(const CalibratedModel& model) {
    json params;
    if (const auto* lr = std::get_if<LogRegModel>(&model.base)) {
        params = {{"weights", lr->weights},
                  {"bias", lr->bias},
                  {"l2_lambda", lr->l2_lambda},
                  {"iterations", lr->iterations},
                  {"gradient_norm", lr->gradient_norm},
                  {"converged", lr->converged}};
    } else {
        const auto& rf = std::get<RandomForestModel>(model.base);
        json trees = json::array();
        for (const auto& t : rf.trees) {
            json nodes = json::array();
            for (const auto& n : t.nodes) nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value}));
            trees.push_back(std::move(nodes));
        }
        params = {{"n_trees", rf.params.n_trees},
                  {"max_depth", rf.params.max_depth},
                  {"features_per_split", rf.params.features_per_split},
                  {"min_samples_split", rf.params.min_samples_split},
                  {"seed", rf.params.seed},
                  {"trees", std::move(trees)}};
    }
    json j = {{"kind", kind_name(model.base)},
              {"feature_names", feature_names(model.base)},
              {"params", std::move(params)},
              {"threshold", model.threshold ? json(*model.threshold) : json(nullptr)},
              {"fingerprint", {{"dataset", model.fingerprint.dataset}, {"config", model.fingerprint.config}}},
              {"version", kModelVersion}};
    return j.dump() + "\n";
}

CalibratedModel model_from_json(std::string_view json_text) {
    try {
        const json j = json::parse(json_text);
        const int version = j.at("version").get<int>();
        if (version != kModelVersion)
            throw ValidationError("unsupported model version " + std::to_string(version));
        const auto kind = j.at("kind").get<std::string>();
        const auto names = j.at("feature_names").get<std::vector<std::string>>();
        const auto& p = j.at("params");
        CalibratedModel m;
        if (kind == "logistic_regression") {
            LogRegModel lr;
            lr.feature_names = names;
            lr.weights = p.at("weights").get<std::vector<double>>();
            lr.bias = p.at("bias").get<double>();
            lr.l2_lambda = p.at("l2_lambda").get<double>();
            lr.iterations = p.at("iterations").get<int>();
            lr.gradient_norm = p.at("gradient_norm").get<double>();
            lr.converged = p.at("converged").get<bool>();
            if (lr.weights.size() != names.size()) throw ValidationError("weight count does not match feature count");
            m.base = std::move(lr);
        } else if (kind == "random_forest") {
            RandomForestModel rf;
            rf.feature_names = names;
            rf.params.n_trees = p.at("n_trees").get<int>();
            rf.params.max_depth = p.at("max_depth").get<int>();
            rf.params.features_per_split = p.at("features_per_split").get<int>();
            rf.params.min_samples_split = p.at("min_samples_split").get<int>();
            rf.params.seed = p.at("seed").get<std::uint64_t>();
            for (const auto& t : p.at("trees")) {
                DecisionTree tree;
                for (const auto& n : t) {
                    TreeNode node{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                                  n.at(4).get<double>()};
                    tree.nodes.push_back(node);
                }
                const int count = static_cast<int>(tree.nodes.size());
                if (count == 0) throw ValidationError("empty tree");
                for (int i = 0; i < count; ++i) {
                    const auto& node = tree.nodes[static_cast<std::size_t>(i)];
                    if (node.feature >= static_cast<int>(names.size()) || node.value < 0 || node.value > 1)
                        throw ValidationError("tree node out of range");
                    // Children always follow their parent, which also rules out cycles.
                    if (node.feature >= 0 && (node.left <= i || node.left >= count || node.right <= i || node.right >= count))
                        throw ValidationError("tree child index out of range");
                }
                rf.trees.push_back(std::move(tree));
            }
            m.base = std::move(rf);
        } else {
            throw ValidationError("unknown model kind \"" + kind + "\"");
        }
        if (const auto& t = j.at("threshold"); !t.is_null()) m.threshold = t.get<double>();
        m.fingerprint.dataset = j.at("fingerprint").at("dataset").get<std::string>();
        m.fingerprint.config = j.at("fingerprint").at("config").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw ParseError("model", 0, e.what());
    }
}

void save_model(const CalibratedModel& model, const std::filesystem::path& path) {
    corpus::write_file(path, to_json(model));
}

CalibratedModel load_model(const std::filesystem::path& path) {
    try {
        return model_from_json(corpus::read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

std::string predictions_jsonl(const std::vector<Prediction>& predictions) {
    std::string out;
    for (const auto& p : predictions)
        out += json{{"procedure_id", p.procedure_id}, {"probability", p.probability}, {"flagged", p.flagged}}.dump() + "\n";
    return out;
}

std::vector<Prediction> parse_predictions(std::string_view jsonl, const std::string& source) {
    std::vector<Prediction> out;
    std::size_t pos = 0, line = 0;
    while (pos < jsonl.size()) {
        std::size_t nl = jsonl.find('\n', pos);
        if (nl == std::string_view::npos) nl = jsonl.size();
        const auto text = jsonl.substr(pos, nl - pos);
        pos = nl + 1;
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            const json j = json::parse(text);
            out.push_back({j.at("procedure_id").get<std::string>(), j.at("probability").get<double>(),
                           j.at("flagged").get<bool>()});
        } catch (const json::exception& e) {
            throw ParseError(source, line, e.what());
        }
    }
    return out;
}

}  // namespace ssi::models
