#pragma once

// Belief-network energies. H_i = -sum_{j != i} w_ij b_i b_j and H = sum_i H_i,
// so every coupled pair enters H twice; H is twice the usual pairwise sum.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/error.hpp"
#include "beliefnet/ggm.hpp"
#include "beliefnet/panel.hpp"

namespace beliefnet {

namespace detail {
inline void check_dims(const Eigen::VectorXd& b, const Eigen::MatrixXd& omega) {
  if (omega.rows() != omega.cols() || omega.rows() != b.size())
    throw Error(ErrorKind::dimension, "belief vector and coupling matrix disagree in size");
}
}  // namespace detail

inline double belief_energy(const Eigen::VectorXd& b, std::size_t i, const Eigen::MatrixXd& omega) {
  detail::check_dims(b, omega);
  if (i >= static_cast<std::size_t>(b.size()))
    throw Error(ErrorKind::lookup, "belief index " + std::to_string(i) + " out of range");
  const auto ii = static_cast<Eigen::Index>(i);
  double field = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (j != ii) field += omega(ii, j) * b(j);
  return -b(ii) * field;
}

/// All per-belief energies at once.
inline Eigen::VectorXd belief_energies(const Eigen::VectorXd& b, const Eigen::MatrixXd& omega) {
  detail::check_dims(b, omega);
  Eigen::MatrixXd off = omega;
  off.diagonal().setZero();
  return -(b.array() * (off * b).array()).matrix();
}

inline double network_energy(const Eigen::VectorXd& b, const Eigen::MatrixXd& omega) {
  return belief_energies(b, omega).sum();
}

/// Change of H_i when belief i moves to `proposed`, all other beliefs fixed.
inline double delta_energy(const Eigen::VectorXd& b, std::size_t i, double proposed, const Eigen::MatrixXd& omega) {
  detail::check_dims(b, omega);
  if (i >= static_cast<std::size_t>(b.size()))
    throw Error(ErrorKind::lookup, "belief index " + std::to_string(i) + " out of range");
  if (!(proposed >= -1.0 && proposed <= 1.0))
    throw Error(ErrorKind::domain, "proposed belief " + std::to_string(proposed) + " outside [-1, 1]");
  const auto ii = static_cast<Eigen::Index>(i);
  double field = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (j != ii) field += omega(ii, j) * b(j);
  return -(proposed - b(ii)) * field;
}

struct EnergyScore {
  std::string person;
  std::string time;
  double H = 0.0;
  Eigen::VectorXd H_i;
};

/// Energies of one person at every time point; `omega_by_time[t]` is the
/// network used at time t.
inline std::vector<EnergyScore> energy_trajectory(const PanelDataset& data, std::size_t person,
                                                  const std::vector<Eigen::MatrixXd>& omega_by_time) {
  if (person >= data.n_persons()) throw Error(ErrorKind::lookup, "person index out of range");
  if (omega_by_time.size() != data.n_times())
    throw Error(ErrorKind::dimension, "need one coupling matrix per time point");
  std::vector<EnergyScore> out;
  out.reserve(data.n_times());
  for (std::size_t t = 0; t < data.n_times(); ++t) {
    const Eigen::VectorXd b = data.belief_vector(person, t);
    if (!b.allFinite())
      throw Error(ErrorKind::lookup, "person '" + data.persons[person] + "' is missing time point " + data.time_points[t]);
    EnergyScore s;
    s.person = data.persons[person];
    s.time = data.time_points[t];
    s.H_i = belief_energies(b, omega_by_time[t]);
    s.H = s.H_i.sum();
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<EnergyScore> energy_trajectory(const PanelDataset& data, std::size_t person,
                                                  const Eigen::MatrixXd& omega) {
  return energy_trajectory(data, person, std::vector<Eigen::MatrixXd>(data.n_times(), omega));
}

inline std::vector<EnergyScore> energy_trajectory(const PanelDataset& data, std::size_t person,
                                                  const FittedModel& model) {
  if (model.n_times() == data.n_times()) return energy_trajectory(data, person, model.omega);
  return energy_trajectory(data, person, model.omega.at(0));
}

/// Network energy H for every person (rows) and time point (columns).
inline Eigen::MatrixXd energy_matrix(const PanelDataset& data, const std::vector<Eigen::MatrixXd>& omega_by_time) {
  if (omega_by_time.size() != data.n_times())
    throw Error(ErrorKind::dimension, "need one coupling matrix per time point");
  Eigen::MatrixXd H(static_cast<Eigen::Index>(data.n_persons()), static_cast<Eigen::Index>(data.n_times()));
  for (std::size_t t = 0; t < data.n_times(); ++t) {
    Eigen::MatrixXd off = omega_by_time[t];
    off.diagonal().setZero();
    if (off.rows() != static_cast<Eigen::Index>(data.n_beliefs()))
      throw Error(ErrorKind::dimension, "coupling matrix and panel disagree in belief count");
    const Eigen::MatrixXd& x = data.values[t];
    H.col(static_cast<Eigen::Index>(t)) = -((x * off).cwiseProduct(x)).rowwise().sum();
  }
  return H;
}

}  // namespace beliefnet
