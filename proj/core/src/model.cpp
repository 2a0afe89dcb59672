#include <stochprox/model.hpp>

namespace stochprox {

void Layout::add(std::string name, Index size, Index subject)
{
    blocks.push_back({std::move(name), this->size, size, subject});
    this->size += size;
}

const Block& Layout::find(const std::string& name) const
{
    for (const auto& b : blocks) {
        if (b.name == name) return b;
    }
    throw ArgumentError("no block named '" + name + "'");
}

Vector LatentModel::apply_psi(const Vector& theta, const Vector& s) const
{
    return psi_jacobian(theta) * s;
}

Vector LatentModel::stat(const Matrix& z) const
{
    if (z.rows() != latent_dim() || z.cols() != n_subjects()) {
        throw ArgumentError("latent matrix has the wrong shape");
    }
    Matrix summaries(subject_stat_dim(), n_subjects());
    for (Index k = 0; k < n_subjects(); ++k) {
        subject_stat(k, z.col(k), summaries.col(k));
    }
    return assemble_stat(summaries);
}

Matrix LatentModel::initial_latent(const Vector& theta) const
{
    Matrix z(latent_dim(), n_subjects());
    for (Index k = 0; k < n_subjects(); ++k) {
        z.col(k) = subject_prior(theta, k).mean;
    }
    return z;
}

void LatentModel::sample_exact(const Vector&, Index, CounterRng&, Eigen::Ref<Vector>) const
{
    throw ArgumentError(name() + " has no exact posterior sampler");
}

std::vector<bool> LatentModel::fixed_mask() const
{
    return std::vector<bool>(static_cast<std::size_t>(dim_theta()), false);
}

void LatentModel::validate_theta(const Vector& theta) const
{
    if (theta.size() != dim_theta()) {
        throw ArgumentError("parameter has length " + std::to_string(theta.size()) +
                            ", model expects " + std::to_string(dim_theta()));
    }
    if (!theta.allFinite()) throw NumericError("parameter is not finite");
}

Vector gradient_surrogate(const LatentModel& model, const Vector& theta, const Vector& stat_estimate)
{
    if (theta.size() != model.dim_theta()) throw ArgumentError("theta dimension mismatch");
    if (stat_estimate.size() != model.dim_stat()) throw ArgumentError("statistic dimension mismatch");
    return model.grad_phi(theta) + model.apply_psi(theta, stat_estimate);
}

double surrogate_value(const LatentModel& model, const Vector& theta, const Vector& s)
{
    if (s.size() != model.dim_stat()) throw ArgumentError("statistic dimension mismatch");
    return model.phi(theta) + s.dot(model.psi(theta));
}

Vector hessian_diag_contribution(const LatentModel& model, const Vector& theta,
                                 const std::vector<Vector>& draw_stats)
{
    if (draw_stats.empty()) throw ArgumentError("curvature estimate needs at least one draw");
    const Index d = model.dim_theta();
    Vector mean_stat = Vector::Zero(model.dim_stat());
    for (const auto& s : draw_stats) mean_stat += s;
    mean_stat /= static_cast<double>(draw_stats.size());

    Vector info = model.complete_information_diag(theta, mean_stat);
    if (draw_stats.size() > 1) {
        const Vector gphi = model.grad_phi(theta);
        Vector mean = Vector::Zero(d);
        Vector sq = Vector::Zero(d);
        for (const auto& s : draw_stats) {
            const Vector score = gphi + model.apply_psi(theta, s);
            mean += score;
            sq += score.cwiseProduct(score);
        }
        const double m = static_cast<double>(draw_stats.size());
        mean /= m;
        const Vector var = (sq - m * mean.cwiseProduct(mean)) / (m - 1.0);
        info -= var;
    }
    return info;
}

Vector majorant_contribution(const LatentModel& model, const Vector& theta,
                             const std::vector<Vector>& draw_stats)
{
    if (draw_stats.empty()) throw ArgumentError("curvature estimate needs at least one draw");
    Vector mean_stat = Vector::Zero(model.dim_stat());
    for (const auto& s : draw_stats) mean_stat += s;
    mean_stat /= static_cast<double>(draw_stats.size());
    return model.complete_information_rowsum(theta, mean_stat);
}

} // namespace stochprox
