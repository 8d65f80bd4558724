#include "rssl/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rssl/errors.hpp"

namespace rssl {

namespace {

void require_same_classes(const ProbDist& p, const OneHotLabel& y, const char* where) {
    if (p.num_classes() != y.num_classes()) {
        std::ostringstream os;
        os << where << ": distribution has " << p.num_classes() << " classes, label has "
           << y.num_classes();
        throw InvalidInput(os.str());
    }
}

void require_q_exponent(double q) {
    if (!(q > 0.0 && q <= 1.0)) {
        throw InvalidHyperparameter("GCE exponent q must lie in (0, 1], got " + std::to_string(q));
    }
}

void require_beta(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw InvalidHyperparameter("BCE beta must be positive, got " + std::to_string(beta));
    }
}

void require_A(double A) {
    if (!(A < 0.0) || !std::isfinite(A)) {
        throw InvalidHyperparameter("RCE constant A must be negative, got " + std::to_string(A));
    }
}

void require_sce_weights(double alpha, double gamma) {
    if (!(alpha >= 0.0) || !(gamma >= 0.0) || !std::isfinite(alpha) || !std::isfinite(gamma)) {
        throw InvalidHyperparameter("SCE weights must be non-negative");
    }
    if (alpha == 0.0 && gamma == 0.0) {
        throw InvalidHyperparameter("SCE weights alpha and gamma cannot both be zero");
    }
}

// 1 - p^e, accurate when p^e is close to 1.
double one_minus_pow(double p, double e) {
    return -std::expm1(e * std::log(p));
}

double sum_pow(std::span<const double> probs, double e) {
    double s = 0.0;
    for (double pk : probs) s += std::pow(pk, e);
    return s;
}

}  // namespace

ProbDist ProbDist::from_probabilities(std::vector<double> probs) {
    if (probs.empty()) throw InvalidInput("ProbDist: empty probability vector");
    double sum = 0.0;
    for (double v : probs) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0 + kSimplexTolerance) {
            throw InvalidInput("ProbDist: entry outside [0, 1]: " + std::to_string(v));
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw InvalidInput("ProbDist: entries sum to " + std::to_string(sum) + ", expected 1");
    }
    for (double& v : probs) v = std::clamp(v, kProbFloor, 1.0);
    return ProbDist(std::move(probs));
}

OneHotLabel::OneHotLabel(std::size_t class_index, std::size_t num_classes)
    : class_index_(class_index), num_classes_(num_classes) {
    if (num_classes == 0 || class_index >= num_classes) {
        throw InvalidInput("OneHotLabel: class index " + std::to_string(class_index) +
                           " out of range for K=" + std::to_string(num_classes));
    }
}

std::string_view to_string(LossFamily family) {
    switch (family) {
        case LossFamily::CE: return "ce";
        case LossFamily::GCE: return "gce";
        case LossFamily::BCE: return "bce";
        case LossFamily::RCE: return "rce";
        case LossFamily::SCE: return "sce";
        case LossFamily::MAE: return "mae";
    }
    return "unknown";
}

LossFamily parse_loss_family(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto f : {LossFamily::CE, LossFamily::GCE, LossFamily::BCE, LossFamily::RCE,
                   LossFamily::SCE, LossFamily::MAE}) {
        if (lower == to_string(f)) return f;
    }
    throw InvalidInput("unknown loss family '" + std::string(name) + "'");
}

void RobustLossConfig::validate() const {
    switch (family) {
        case LossFamily::CE:
        case LossFamily::MAE: return;
        case LossFamily::GCE: require_q_exponent(q_exponent); return;
        case LossFamily::BCE: require_beta(beta); return;
        case LossFamily::RCE: require_A(A); return;
        case LossFamily::SCE:
            require_sce_weights(alpha, gamma);
            require_A(A);
            return;
    }
}

std::string RobustLossConfig::describe() const {
    std::ostringstream os;
    os << to_string(family);
    switch (family) {
        case LossFamily::GCE: os << "(q=" << q_exponent << ")"; break;
        case LossFamily::BCE: os << "(beta=" << beta << (bce_verbatim ? ",verbatim" : "") << ")"; break;
        case LossFamily::RCE: os << "(A=" << A << ")"; break;
        case LossFamily::SCE: os << "(alpha=" << alpha << ",gamma=" << gamma << ",A=" << A << ")"; break;
        default: break;
    }
    return os.str();
}

RobustLossConfig RobustLossConfig::ce() { return {}; }

RobustLossConfig RobustLossConfig::gce(double q_exponent) {
    RobustLossConfig c;
    c.family = LossFamily::GCE;
    c.q_exponent = q_exponent;
    return c;
}

RobustLossConfig RobustLossConfig::bce(double beta) {
    RobustLossConfig c;
    c.family = LossFamily::BCE;
    c.beta = beta;
    return c;
}

RobustLossConfig RobustLossConfig::rce(double A) {
    RobustLossConfig c;
    c.family = LossFamily::RCE;
    c.A = A;
    return c;
}

RobustLossConfig RobustLossConfig::sce(double alpha, double gamma, double A) {
    RobustLossConfig c;
    c.family = LossFamily::SCE;
    c.alpha = alpha;
    c.gamma = gamma;
    c.A = A;
    return c;
}

RobustLossConfig RobustLossConfig::mae() {
    RobustLossConfig c;
    c.family = LossFamily::MAE;
    return c;
}

ProbDist softmax(std::span<const double> scores) {
    if (scores.size() < 2) throw InvalidInput("softmax: need at least 2 scores");
    for (std::size_t k = 0; k < scores.size(); ++k) {
        if (!std::isfinite(scores[k])) {
            throw InvalidInput("softmax: non-finite score at index " + std::to_string(k));
        }
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double z = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        out[k] = std::exp(scores[k] - top);
        z += out[k];
    }
    for (double& v : out) v /= z;
    return ProbDist::from_probabilities(std::move(out));
}

double ce_loss(const ProbDist& p, const OneHotLabel& y) {
    require_same_classes(p, y, "ce_loss");
    return -std::log(p[y.class_index()]);
}

double gce_loss(const ProbDist& p, const OneHotLabel& y, double q_exponent) {
    require_q_exponent(q_exponent);
    require_same_classes(p, y, "gce_loss");
    const double py = p[y.class_index()];
    // Exact MAE limit at q = 1.
    if (q_exponent == 1.0) return 1.0 - py;
    return one_minus_pow(py, q_exponent) / q_exponent;
}

double bce_loss(const ProbDist& p, const OneHotLabel& y, double beta) {
    require_beta(beta);
    require_same_classes(p, y, "bce_loss");
    const double py = p[y.class_index()];
    return (beta + 1.0) / beta * one_minus_pow(py, beta) + sum_pow(p.probs(), beta + 1.0);
}

double bce_loss_verbatim(const ProbDist& p, const OneHotLabel& y, double beta) {
    require_beta(beta);
    require_same_classes(p, y, "bce_loss_verbatim");
    const double py = p[y.class_index()];
    return (beta + 1.0) / beta * std::pow(1.0 - py, beta) + sum_pow(p.probs(), beta + 1.0);
}

double rce_loss(const ProbDist& p, const OneHotLabel& y, double A) {
    require_A(A);
    require_same_classes(p, y, "rce_loss");
    return -A * (1.0 - p[y.class_index()]);
}

double mae_loss(const ProbDist& p, const OneHotLabel& y) {
    require_same_classes(p, y, "mae_loss");
    // sum_k |p_k - onehot_k| collapses to 2 (1 - p_y) on the simplex.
    return 2.0 * (1.0 - p[y.class_index()]);
}

double sce_loss(const ProbDist& p, const OneHotLabel& y, double alpha, double gamma, double A) {
    require_sce_weights(alpha, gamma);
    return alpha * ce_loss(p, y) + gamma * rce_loss(p, y, A);
}

double loss_value(const RobustLossConfig& config, const ProbDist& p, const OneHotLabel& y) {
    switch (config.family) {
        case LossFamily::CE: return ce_loss(p, y);
        case LossFamily::GCE: return gce_loss(p, y, config.q_exponent);
        case LossFamily::BCE:
            return config.bce_verbatim ? bce_loss_verbatim(p, y, config.beta)
                                       : bce_loss(p, y, config.beta);
        case LossFamily::RCE: return rce_loss(p, y, config.A);
        case LossFamily::SCE: return sce_loss(p, y, config.alpha, config.gamma, config.A);
        case LossFamily::MAE: return mae_loss(p, y);
    }
    throw InvalidInput("loss_value: unknown loss family");
}

std::vector<double> loss_grad_scores(const RobustLossConfig& config,
                                     std::span<const double> scores,
                                     const OneHotLabel& y) {
    config.validate();
    const ProbDist p = softmax(scores);
    require_same_classes(p, y, "loss_grad_scores");

    const std::size_t K = p.num_classes();
    const std::size_t t = y.class_index();
    const double py = p[t];

    // d p_y / d s_j = p_y (delta_yj - p_j); every family except the BCE
    // regulariser depends on p only through p_y.
    auto through_py = [&](double dloss_dpy, std::vector<double>& g) {
        for (std::size_t j = 0; j < K; ++j) {
            g[j] += dloss_dpy * py * ((j == t ? 1.0 : 0.0) - p[j]);
        }
    };

    std::vector<double> g(K, 0.0);
    switch (config.family) {
        case LossFamily::CE:
            for (std::size_t j = 0; j < K; ++j) g[j] = p[j] - (j == t ? 1.0 : 0.0);
            break;
        case LossFamily::GCE:
            through_py(-std::pow(py, config.q_exponent - 1.0), g);
            break;
        case LossFamily::BCE: {
            const double b = config.beta;
            if (config.bce_verbatim) {
                through_py(-(b + 1.0) * std::pow(1.0 - py, b - 1.0), g);
            } else {
                through_py(-(b + 1.0) * std::pow(py, b - 1.0), g);
            }
            // d/ds_j sum_k p_k^(b+1) = (b+1) (p_j^(b+1) - p_j sum_k p_k^(b+1))
            const double s = sum_pow(p.probs(), b + 1.0);
            for (std::size_t j = 0; j < K; ++j) {
                g[j] += (b + 1.0) * (std::pow(p[j], b + 1.0) - p[j] * s);
            }
            break;
        }
        case LossFamily::RCE:
            through_py(config.A, g);
            break;
        case LossFamily::MAE:
            through_py(-2.0, g);
            break;
        case LossFamily::SCE:
            for (std::size_t j = 0; j < K; ++j) {
                g[j] = config.alpha * (p[j] - (j == t ? 1.0 : 0.0));
            }
            through_py(config.gamma * config.A, g);
            break;
    }

    for (std::size_t j = 0; j < K; ++j) {
        if (!std::isfinite(g[j])) {
            throw NumericError("loss_grad_scores: non-finite gradient at class " + std::to_string(j) +
                               " for " + config.describe());
        }
    }
    return g;
}

}  // namespace rssl
