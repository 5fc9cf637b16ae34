#include <cmath>

#include "msa/error.hpp"
#include "msa/training/trainer.hpp"

namespace msa {

void TrainConfig::validate() const
{
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("train.lr_decay_factor must be in (0, 1]");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
        const double m = lr_milestones[i];
        if (!(m > 0.0 && m < 1.0)) throw ConfigError("train.lr_milestones must lie in (0, 1)");
        if (i > 0 && !(m > lr_milestones[i - 1])) throw ConfigError("train.lr_milestones must be strictly increasing");
    }
    if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    loss.validate();
    contrastive.validate();
    augment.validate();
}

LossWeights TrainConfig::effective_weights() const
{
    LossWeights w = loss;
    if (!use_spcl) w.gamma = 0.0;
    return w;
}

NetworkConfig apply_ablation(NetworkConfig net, const TrainConfig& train)
{
    net.use_cafm = train.use_cafm;
    net.use_msd = train.use_msd;
    net.validate();
    return net;
}

nlohmann::json to_json(const TrainConfig& c)
{
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"lr_decay_factor", c.lr_decay_factor},
            {"lr_milestones", c.lr_milestones},
            {"seed", c.seed},
            {"loss", {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"gamma", c.loss.gamma}}},
            {"contrastive",
             {{"tau", c.contrastive.tau},
              {"n_prototypes", c.contrastive.n_p},
              {"margin", c.contrastive.margin},
              {"w1", c.contrastive.w1},
              {"w0", c.contrastive.w0},
              {"max_pixels", c.contrastive.max_pixels}}},
            {"augment",
             {{"enabled", c.use_augment},
              {"brightness", c.augment.brightness},
              {"contrast_range", {c.augment.contrast_min, c.augment.contrast_max}}}},
            {"use_spcl", c.use_spcl},
            {"use_cafm", c.use_cafm},
            {"use_msd", c.use_msd},
            {"deterministic", c.deterministic},
            {"max_steps", c.max_steps},
            {"eval_every", c.eval_every}};
}

namespace {

void need(bool ok, const std::string& field, const char* what)
{
    if (!ok) throw ConfigError(field + ": expected " + what);
}

template <typename Fn>
void each_field(const nlohmann::json& j, const std::string& scope, Fn&& fn)
{
    need(j.is_object(), scope, "an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!fn(it.key(), it.value(), scope + "." + it.key())) throw ConfigError(scope + "." + it.key() + ": unknown field");
}

double number(const nlohmann::json& v, const std::string& f)
{
    need(v.is_number(), f, "a number");
    return v.get<double>();
}

long long integer(const nlohmann::json& v, const std::string& f)
{
    need(v.is_number_integer(), f, "an integer");
    return v.get<long long>();
}

bool boolean(const nlohmann::json& v, const std::string& f)
{
    need(v.is_boolean(), f, "true or false");
    return v.get<bool>();
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c)
{
    each_field(j, "train", [&](const std::string& k, const nlohmann::json& v, const std::string& f) {
        if (k == "epochs") c.epochs = int(integer(v, f));
        else if (k == "batch_size") c.batch_size = int(integer(v, f));
        else if (k == "lr") c.lr = number(v, f);
        else if (k == "lr_decay_factor") c.lr_decay_factor = number(v, f);
        else if (k == "lr_milestones") {
            need(v.is_array(), f, "an array of fractions");
            c.lr_milestones.clear();
            for (const auto& m : v) c.lr_milestones.push_back(number(m, f));
        } else if (k == "seed") {
            need(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), f, "a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (k == "loss") {
            each_field(v, f, [&](const std::string& k2, const nlohmann::json& v2, const std::string& f2) {
                if (k2 == "alpha") c.loss.alpha = number(v2, f2);
                else if (k2 == "beta") c.loss.beta = number(v2, f2);
                else if (k2 == "gamma") c.loss.gamma = number(v2, f2);
                else return false;
                return true;
            });
        } else if (k == "contrastive") {
            each_field(v, f, [&](const std::string& k2, const nlohmann::json& v2, const std::string& f2) {
                if (k2 == "tau") c.contrastive.tau = number(v2, f2);
                else if (k2 == "n_prototypes") c.contrastive.n_p = int(integer(v2, f2));
                else if (k2 == "margin") c.contrastive.margin = number(v2, f2);
                else if (k2 == "w1") c.contrastive.w1 = number(v2, f2);
                else if (k2 == "w0") c.contrastive.w0 = number(v2, f2);
                else if (k2 == "max_pixels") c.contrastive.max_pixels = int(integer(v2, f2));
                else return false;
                return true;
            });
        } else if (k == "augment") {
            each_field(v, f, [&](const std::string& k2, const nlohmann::json& v2, const std::string& f2) {
                if (k2 == "enabled") c.use_augment = boolean(v2, f2);
                else if (k2 == "brightness") c.augment.brightness = number(v2, f2);
                else if (k2 == "contrast_range") {
                    need(v2.is_array() && v2.size() == 2, f2, "[min, max]");
                    c.augment.contrast_min = number(v2[0], f2);
                    c.augment.contrast_max = number(v2[1], f2);
                } else return false;
                return true;
            });
        } else if (k == "use_spcl") c.use_spcl = boolean(v, f);
        else if (k == "use_cafm") c.use_cafm = boolean(v, f);
        else if (k == "use_msd") c.use_msd = boolean(v, f);
        else if (k == "deterministic") c.deterministic = boolean(v, f);
        else if (k == "max_steps") c.max_steps = int(integer(v, f));
        else if (k == "eval_every") c.eval_every = int(integer(v, f));
        else return false;
        return true;
    });
    c.validate();
    return c;
}

int milestone_epoch(const TrainConfig& cfg, std::size_t i)
{
    return int(std::lround(cfg.lr_milestones.at(i) * cfg.epochs));
}

double learning_rate(const TrainConfig& cfg, int epoch)
{
    int passed = 0;
    for (std::size_t i = 0; i < cfg.lr_milestones.size(); ++i) passed += epoch >= milestone_epoch(cfg, i);
    const double inv = 1.0 / cfg.lr_decay_factor;
    const double inv_int = std::round(inv);
    if (std::abs(inv - inv_int) < 1e-9 * inv) return cfg.lr / std::pow(inv_int, passed);
    return cfg.lr * std::pow(cfg.lr_decay_factor, passed);
}

Adam::Adam(nn::ParameterList<float>& params, double beta1, double beta2, double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps)
{
    for (const auto& p : params_) {
        m_.emplace_back(p.value->size(), 0.0);
        v_.emplace_back(p.value->size(), 0.0);
    }
}

void Adam::step(double lr)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        float* w = params_[i].value->data();
        const float* g = params_[i].grad->data();
        auto& m = m_[i];
        auto& v = v_[i];
        const std::size_t n = m.size();
#pragma omp parallel for schedule(static) if (n > 4096)
        for (std::size_t k = 0; k < n; ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * double(g[k]) * g[k];
            w[k] = float(w[k] - lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_));
        }
    }
}

}  // namespace msa
