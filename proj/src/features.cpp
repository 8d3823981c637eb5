#include "bpr/features.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "bpr/error.hpp"

namespace bpr {

std::string to_string(FeatureSource source)
{
    switch (source) {
    case FeatureSource::FT: return "FT";
    case FeatureSource::FE: return "FE";
    case FeatureSource::PCA: return "PCA";
    case FeatureSource::Reward: return "REWARD";
    }
    return "?";
}

BasisFunction::BasisFunction(int dimension, std::function<Eigen::VectorXd(StateIndex)> map)
    : dimension_(dimension), map_(std::move(map))
{
    if (dimension_ < 1)
        throw ValidationError("basis dimension must be positive");
}

BasisFunction BasisFunction::indicator(int num_states)
{
    return BasisFunction(num_states, [num_states](StateIndex s) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(num_states);
        v[s] = 1.0;
        return v;
    });
}

Eigen::VectorXd BasisFunction::operator()(StateIndex s) const
{
    Eigen::VectorXd v = map_(s);
    if (v.size() != dimension_)
        throw ValidationError("basis output has wrong dimension");
    if ((v.array() < 0.0).any() || (v.array() > 1.0).any())
        throw ValidationError("basis output leaves [0,1]");
    return v;
}

Eigen::MatrixXd BasisFunction::matrix(int num_states) const
{
    Eigen::MatrixXd phi(num_states, dimension_);
    for (StateIndex s = 0; s < num_states; ++s)
        phi.row(s) = (*this)(s).transpose();
    return phi;
}

FeatureVector feature_trajectory(const ObservationSet& obs, const FeatureTrajectoryOptions& opts)
{
    if (obs.empty())
        throw ValidationError("feature trajectory needs a nonempty observation set");
    if (opts.horizon < 1)
        throw ValidationError("horizon must be at least 1");

    const int h = opts.horizon;
    const auto n = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd enc(n, 2 * h);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& steps = obs.trajectories[static_cast<std::size_t>(j)].steps;
        if (steps.empty())
            throw ValidationError("trajectories must be nonempty");
        for (int t = 0; t < h; ++t) {
            const auto& st = steps[std::min<std::size_t>(static_cast<std::size_t>(t), steps.size() - 1)];
            enc(j, 2 * t) = st.state;
            enc(j, 2 * t + 1) = st.action;
        }
    }

    if (opts.normalization == FtNormalization::PerAgent) {
        for (Eigen::Index c = 0; c < enc.cols(); ++c) {
            const double lo = enc.col(c).minCoeff();
            const double hi = enc.col(c).maxCoeff();
            if (hi > lo)
                enc.col(c) = (enc.col(c).array() - lo) / (hi - lo);
            else
                enc.col(c).setZero();
        }
    } else {
        if (opts.num_states < 1 || opts.num_actions < 1)
            throw ValidationError("global normalization needs the state and action counts");
        const double s_scale = opts.num_states > 1 ? 1.0 / (opts.num_states - 1) : 0.0;
        const double a_scale = opts.num_actions > 1 ? 1.0 / (opts.num_actions - 1) : 0.0;
        for (int t = 0; t < h; ++t) {
            enc.col(2 * t) *= s_scale;
            enc.col(2 * t + 1) *= a_scale;
        }
    }
    return {enc.colwise().mean().transpose(), FeatureSource::FT};
}

FeatureVector feature_expectation(const ObservationSet& obs, const BasisFunction& basis, double discount)
{
    if (obs.empty())
        throw ValidationError("feature expectation needs a nonempty observation set");
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(basis.dimension());
    for (const auto& traj : obs.trajectories) {
        double w = 1.0;
        for (const auto& st : traj.steps) {
            acc += w * basis(st.state);
            w *= discount;
        }
    }
    return {acc / static_cast<double>(obs.size()), FeatureSource::FE};
}

Eigen::MatrixXd stack_rows(const std::vector<FeatureVector>& vectors)
{
    if (vectors.empty())
        return {};
    const auto d = vectors.front().values.size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), d);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].values.size() != d)
            throw ValidationError("feature vectors have inconsistent lengths");
        m.row(static_cast<Eigen::Index>(i)) = vectors[i].values.transpose();
    }
    return m;
}

PcaResult pca_project(const std::vector<FeatureVector>& vectors, int num_components)
{
    if (vectors.size() < 2)
        throw ValidationError("PCA needs at least two vectors");
    const Eigen::MatrixXd x = stack_rows(vectors);
    const auto d = x.cols();
    if (num_components < 1 || num_components > d)
        throw ValidationError("number of components must lie in [1, dimension]");

    PcaResult out;
    out.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centred = x.rowwise() - out.mean.transpose();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw NumericalError("covariance eigen-decomposition failed");

    // Eigen returns ascending eigenvalues.
    out.components.resize(d, num_components);
    out.eigenvalues.resize(num_components);
    for (int c = 0; c < num_components; ++c) {
        const auto src = d - 1 - c;
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0)
            v = -v;
        out.components.col(c) = v;
        out.eigenvalues[c] = std::max(0.0, eig.eigenvalues()[src]);
    }
    const double total = eig.eigenvalues().cwiseMax(0.0).sum();
    out.explained_variance = total > 0.0 ? Eigen::VectorXd(out.eigenvalues / total)
                                         : Eigen::VectorXd(Eigen::VectorXd::Zero(num_components));

    const Eigen::MatrixXd proj = centred * out.components;
    out.projected.reserve(vectors.size());
    for (Eigen::Index i = 0; i < proj.rows(); ++i)
        out.projected.push_back({proj.row(i).transpose(), FeatureSource::PCA});
    return out;
}

void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& rows,
                       const std::vector<std::optional<int>>& labels, const std::string& header_prefix)
{
    if (rows.size() != labels.size())
        throw ValidationError("one label slot per feature row is required");
    const auto d = rows.empty() ? 0 : rows.front().values.size();
    std::vector<std::string> columns;
    for (Eigen::Index c = 0; c < d; ++c) columns.push_back(header_prefix + std::to_string(c));
    write_feature_csv(out, rows, labels, columns);
}

void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& rows,
                       const std::vector<std::optional<int>>& labels, const std::vector<std::string>& columns)
{
    if (rows.size() != labels.size())
        throw ValidationError("one label slot per feature row is required");
    const auto d = static_cast<Eigen::Index>(columns.size());
    for (const auto& c : columns) out << c << ',';
    out << "label\n";
    std::ostringstream cell;
    cell << std::setprecision(17);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].values.size() != d)
            throw ValidationError("feature vectors have inconsistent lengths");
        for (Eigen::Index c = 0; c < d; ++c) {
            cell.str("");
            cell << rows[i].values[c];
            out << cell.str() << ',';
        }
        if (labels[i])
            out << *labels[i];
        out << '\n';
    }
}

FeatureTable read_feature_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("feature CSV is empty");
    const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> values;
    FeatureTable table;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> row;
        for (Eigen::Index c = 0; c < columns; ++c) {
            if (!std::getline(ss, field, ','))
                throw ValidationError("feature CSV row is too short");
            row.push_back(std::stod(field));
        }
        std::getline(ss, field);
        table.labels.push_back(field.empty() ? std::nullopt : std::optional<int>(std::stoi(field)));
        values.push_back(std::move(row));
    }
    table.rows.resize(static_cast<Eigen::Index>(values.size()), columns);
    for (std::size_t i = 0; i < values.size(); ++i)
        for (Eigen::Index c = 0; c < columns; ++c)
            table.rows(static_cast<Eigen::Index>(i), c) = values[i][static_cast<std::size_t>(c)];
    return table;
}

} // namespace bpr
