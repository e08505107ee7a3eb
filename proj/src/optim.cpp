#include "adkd/optim.hpp"

#include <cmath>

namespace adkd {

void AdamState::step(std::vector<Tensor>& params, const std::vector<std::string>& names) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].numel(), 0.0f);
            v_[i].assign(params[i].numel(), 0.0f);
        }
    }
    if (m_.size() != params.size()) {
        throw StateError("adam_step: parameter count changed between steps");
    }
    ++t_;
    const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (m_[i].size() != p.numel()) {
            throw StateError("adam_step: state size does not match parameter " +
                             std::to_string(i));
        }
        auto g = p.grad();
        if (g.size() != p.numel()) {
            throw StateError("adam_step: missing grad on parameter " + std::to_string(i));
        }
        auto pv = p.data_mut();
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j])) {
                const std::string name =
                    i < names.size() ? names[i] : ("param[" + std::to_string(i) + "]");
                throw NumericError("adam_step: non-finite gradient in " + name);
            }
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0f - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0f - cfg_.beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / b1t;
            const double vhat = v_[i][j] / b2t;
            pv[j] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        p.check_finite(i < names.size() ? names[i] : "parameter after adam step");
    }
}

}  // namespace adkd
