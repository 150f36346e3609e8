#include "usplat/losses.hpp"

#include "usplat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace usplat {

void LossReport::add(const std::string& name, double value) {
  terms.emplace_back(name, value);
  total += value;
}

double LossReport::value(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return v;
  throw ConfigError("unknown loss term: " + name);
}

bool LossReport::has(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return true;
  return false;
}

std::string loss_report_csv_header(const LossReport& report) {
  std::string out = "iteration";
  for (const auto& [name, value] : report.terms) out += "," + name;
  return out + ",total\n";
}

std::string loss_report_csv_row(int iteration, const LossReport& report) {
  char buf[40];
  std::string out = std::to_string(iteration);
  for (const auto& [name, value] : report.terms) {
    std::snprintf(buf, sizeof(buf), ",%.17g", value);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), ",%.17g\n", report.total);
  return out + buf;
}

ModelGrad::ModelGrad(const Model& model) {
  const int frames = model_frames(model);
  d_position.assign(model.size(), std::vector<Vec3>(frames, Vec3::Zero()));
  d_rotation.assign(model.size(), std::vector<Vec4>(frames, Vec4::Zero()));
  d_color.assign(model.size(), Vec3::Zero());
  d_opacity.assign(model.size(), 0.0);
}

void ModelGrad::set_zero() {
  for (auto& v : d_position) std::fill(v.begin(), v.end(), Vec3::Zero());
  for (auto& v : d_rotation) std::fill(v.begin(), v.end(), Vec4::Zero());
  std::fill(d_color.begin(), d_color.end(), Vec3::Zero());
  std::fill(d_opacity.begin(), d_opacity.end(), 0.0);
}

std::string ModelGrad::first_non_finite() const {
  for (size_t i = 0; i < d_position.size(); ++i) {
    for (size_t t = 0; t < d_position[i].size(); ++t) {
      if (!d_position[i][t].allFinite())
        return "position[" + std::to_string(i) + "][" + std::to_string(t) + "]";
      if (!d_rotation[i][t].allFinite())
        return "rotation[" + std::to_string(i) + "][" + std::to_string(t) + "]";
    }
    if (!d_color[i].allFinite()) return "color[" + std::to_string(i) + "]";
    if (!std::isfinite(d_opacity[i])) return "opacity[" + std::to_string(i) + "]";
  }
  return "";
}

NeighborSet key_neighbor_set(const MotionGraph& graph) {
  return {graph.key_nodes, graph.key_edges, graph.params.k};
}

NeighborSet nonkey_neighbor_set(const MotionGraph& graph) {
  // Inherited sets carry the anchor plus its k neighbors.
  return {graph.non_key_nodes, graph.inherited_edges, graph.params.k + 1};
}

NeighborSet euclidean_neighbor_set(const Model& model, int canonical, int k) {
  const int n = static_cast<int>(model.size());
  if (n <= k)
    throw ConfigError("model of size " + std::to_string(n) + " cannot supply k=" +
                      std::to_string(k) + " neighbors");
  NeighborSet set;
  set.k = k;
  set.nodes.resize(n);
  set.edges.resize(n);
  for (int i = 0; i < n; ++i) {
    set.nodes[i] = i;
    std::vector<std::pair<double, int>> dist;
    dist.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.emplace_back((model[j].positions[canonical] - model[i].positions[canonical]).norm(),
                        j);
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<int> neighbors(k);
    for (int e = 0; e < k; ++e) neighbors[e] = dist[e].second;
    const auto w = edge_weights(model, i, neighbors, canonical);
    set.edges[i].resize(k);
    for (int e = 0; e < k; ++e) set.edges[i][e] = {neighbors[e], w[e]};
  }
  return set;
}

namespace {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline void add_raw_rot_grad(ModelGrad* grad, const Model& model, int node, int t,
                             const Vec4& g_unit) {
  grad->d_rotation[node][t] += qnormalize_jac(model[node].rotations[t]) * g_unit;
}

}  // namespace

double iso_loss(const Model& model, const NeighborSet& nbrs, int canonical, double scale,
                ModelGrad* grad) {
  if (nbrs.nodes.empty()) return 0.0;
  const int frames = model_frames(model);
  const double norm = 1.0 / (static_cast<double>(nbrs.k) * nbrs.nodes.size());
  double sum = 0.0;
  for (size_t a = 0; a < nbrs.nodes.size(); ++a) {
    const int i = nbrs.nodes[a];
    for (const auto& e : nbrs.edges[a]) {
      const int j = e.target;
      const Vec3 dn = model[j].positions[canonical] - model[i].positions[canonical];
      const double ln = dn.norm();
      for (int t = 0; t < frames; ++t) {
        const Vec3 dt = model[j].positions[t] - model[i].positions[t];
        const double lt = dt.norm();
        const double r = ln - lt;
        sum += e.weight * std::abs(r);
        if (!grad || r == 0.0) continue;
        const double s = scale * e.weight * norm * sgn(r);
        if (ln > 0.0) {
          const Vec3 un = (s / ln) * dn;
          grad->d_position[j][canonical] += un;
          grad->d_position[i][canonical] -= un;
        }
        if (lt > 0.0) {
          const Vec3 ut = (s / lt) * dt;
          grad->d_position[j][t] -= ut;
          grad->d_position[i][t] += ut;
        }
      }
    }
  }
  return sum * norm;
}

double rigid_loss(const Model& model, const NeighborSet& nbrs, int delta, double scale,
                  ModelGrad* grad) {
  if (nbrs.nodes.empty()) return 0.0;
  if (delta < 1) throw ConfigError("rigidity interval must be at least 1");
  const int frames = model_frames(model);
  const double norm = 1.0 / (static_cast<double>(nbrs.k) * nbrs.nodes.size());
  double sum = 0.0;
  for (size_t a = 0; a < nbrs.nodes.size(); ++a) {
    const int i = nbrs.nodes[a];
    for (int t = delta; t < frames; ++t) {
      const int tp = t - delta;
      const Vec4 qi_t = qnormalized(model[i].rotations[t]);
      const Vec4 qi_p = qnormalized(model[i].rotations[tp]);
      // Relative node motion from t back to t - delta; the canonical frame
      // cancels out of the transform chain.
      const Vec4 qrel = qmul(qi_p, qconj(qi_t));
      const Mat3 rot = qrot_matrix(qrel);
      for (const auto& e : nbrs.edges[a]) {
        const int j = e.target;
        const Vec3 d = model[j].positions[t] - model[i].positions[t];
        const Vec3 r =
            model[j].positions[tp] - model[i].positions[tp] - rot * d;
        const double rn = r.norm();
        sum += e.weight * rn;
        if (!grad || rn == 0.0) continue;
        const Vec3 u = (scale * e.weight * norm / rn) * r;
        grad->d_position[j][tp] += u;
        grad->d_position[i][tp] -= u;
        const Vec3 rtu = rot.transpose() * u;
        grad->d_position[j][t] -= rtu;
        grad->d_position[i][t] += rtu;
        const Vec4 g_qrel = -(qrotate_jac_q(qrel, d).transpose() * u);
        add_raw_rot_grad(grad, model, i, tp,
                         qmul_jac_left(qconj(qi_t)).transpose() * g_qrel);
        add_raw_rot_grad(grad, model, i, t,
                         qconj_jac() * (qmul_jac_right(qi_p).transpose() * g_qrel));
      }
    }
  }
  return sum * norm;
}

double rot_loss(const Model& model, const NeighborSet& nbrs, int delta, double scale,
                ModelGrad* grad) {
  if (nbrs.nodes.empty()) return 0.0;
  if (delta < 1) throw ConfigError("rotation interval must be at least 1");
  const int frames = model_frames(model);
  const double norm = 1.0 / (static_cast<double>(nbrs.k) * nbrs.nodes.size());
  double sum = 0.0;
  for (size_t a = 0; a < nbrs.nodes.size(); ++a) {
    const int i = nbrs.nodes[a];
    for (int t = delta; t < frames; ++t) {
      const int tp = t - delta;
      const Vec4 qi_t = qnormalized(model[i].rotations[t]);
      const Vec4 qi_p = qnormalized(model[i].rotations[tp]);
      const Vec4 reli_raw = qmul(qi_t, qconj(qi_p));
      const double si = reli_raw[0] < 0.0 ? -1.0 : 1.0;
      for (const auto& e : nbrs.edges[a]) {
        const int j = e.target;
        const Vec4 qj_t = qnormalized(model[j].rotations[t]);
        const Vec4 qj_p = qnormalized(model[j].rotations[tp]);
        const Vec4 relj_raw = qmul(qj_t, qconj(qj_p));
        const double sj = relj_raw[0] < 0.0 ? -1.0 : 1.0;
        const Vec4 diff = sj * relj_raw - si * reli_raw;
        const double dn = diff.norm();
        sum += e.weight * dn;
        if (!grad || dn == 0.0) continue;
        const Vec4 u = (scale * e.weight * norm / dn) * diff;
        const Vec4 gj = sj * u;
        const Vec4 gi = -si * u;
        add_raw_rot_grad(grad, model, j, t, qmul_jac_left(qconj(qj_p)).transpose() * gj);
        add_raw_rot_grad(grad, model, j, tp,
                         qconj_jac() * (qmul_jac_right(qj_t).transpose() * gj));
        add_raw_rot_grad(grad, model, i, t, qmul_jac_left(qconj(qi_p)).transpose() * gi);
        add_raw_rot_grad(grad, model, i, tp,
                         qconj_jac() * (qmul_jac_right(qi_t).transpose() * gi));
      }
    }
  }
  return sum * norm;
}

double vel_loss(const Model& model, std::span<const int> nodes, double scale,
                ModelGrad* grad) {
  const int frames = model_frames(model);
  double sum = 0.0;
  for (int i : nodes) {
    for (int t = 1; t < frames; ++t) {
      const Vec3 dp = model[i].positions[t - 1] - model[i].positions[t];
      for (int c = 0; c < 3; ++c) {
        sum += std::abs(dp[c]);
        if (!grad || dp[c] == 0.0) continue;
        const double s = scale * sgn(dp[c]);
        grad->d_position[i][t - 1][c] += s;
        grad->d_position[i][t][c] -= s;
      }
      const Vec4 qp = qnormalized(model[i].rotations[t - 1]);
      const Vec4 qt = qnormalized(model[i].rotations[t]);
      const Vec4 rel_raw = qmul(qp, qconj(qt));
      const double sign = rel_raw[0] < 0.0 ? -1.0 : 1.0;
      const Vec4 resid = sign * rel_raw - quat_identity();
      sum += resid.lpNorm<1>();
      if (!grad) continue;
      const Vec4 g(sgn(resid[0]), sgn(resid[1]), sgn(resid[2]), sgn(resid[3]));
      if (g.isZero()) continue;
      const Vec4 g_raw = (scale * sign) * g;
      add_raw_rot_grad(grad, model, i, t - 1, qmul_jac_left(qconj(qt)).transpose() * g_raw);
      add_raw_rot_grad(grad, model, i, t,
                       qconj_jac() * (qmul_jac_right(qp).transpose() * g_raw));
    }
  }
  return sum;
}

double acc_loss(const Model& model, std::span<const int> nodes, double scale,
                ModelGrad* grad) {
  const int frames = model_frames(model);
  double sum = 0.0;
  for (int i : nodes) {
    for (int t = 2; t < frames; ++t) {
      const Vec3 dd = model[i].positions[t - 2] - 2.0 * model[i].positions[t - 1] +
                      model[i].positions[t];
      for (int c = 0; c < 3; ++c) {
        sum += std::abs(dd[c]);
        if (!grad || dd[c] == 0.0) continue;
        const double s = scale * sgn(dd[c]);
        grad->d_position[i][t - 2][c] += s;
        grad->d_position[i][t - 1][c] -= 2.0 * s;
        grad->d_position[i][t][c] += s;
      }
      const Vec4 q2 = qnormalized(model[i].rotations[t - 2]);
      const Vec4 q1 = qnormalized(model[i].rotations[t - 1]);
      const Vec4 q0 = qnormalized(model[i].rotations[t]);
      const Vec4 rel1 = qmul(q2, qconj(q1));
      const Vec4 rel2 = qmul(q1, qconj(q0));
      const Vec4 comp_raw = qmul(rel1, qconj(rel2));
      const double sign = comp_raw[0] < 0.0 ? -1.0 : 1.0;
      const Vec4 resid = sign * comp_raw - quat_identity();
      sum += resid.lpNorm<1>();
      if (!grad) continue;
      const Vec4 g(sgn(resid[0]), sgn(resid[1]), sgn(resid[2]), sgn(resid[3]));
      if (g.isZero()) continue;
      const Vec4 g_comp = (scale * sign) * g;
      const Vec4 g_rel1 = qmul_jac_left(qconj(rel2)).transpose() * g_comp;
      const Vec4 g_rel2 = qconj_jac() * (qmul_jac_right(rel1).transpose() * g_comp);
      add_raw_rot_grad(grad, model, i, t - 2, qmul_jac_left(qconj(q1)).transpose() * g_rel1);
      Vec4 g_q1 = qconj_jac() * (qmul_jac_right(q2).transpose() * g_rel1);
      g_q1 += qmul_jac_left(qconj(q0)).transpose() * g_rel2;
      add_raw_rot_grad(grad, model, i, t - 1, g_q1);
      add_raw_rot_grad(grad, model, i, t,
                       qconj_jac() * (qmul_jac_right(q1).transpose() * g_rel2));
    }
  }
  return sum;
}

double motion_loss(const Model& model, const NeighborSet& nbrs, int canonical,
                   const LossWeights& weights, double scale, ModelGrad* grad,
                   LossReport* report, const std::string& prefix) {
  double total = 0.0;
  const auto run = [&](const char* name, double lambda, auto&& eval) {
    ModelGrad* g = lambda != 0.0 ? grad : nullptr;
    const double weighted = lambda * eval(scale * lambda, g);
    total += weighted;
    if (report) report->add(prefix + name, weighted);
  };
  run("iso", weights.lambda_iso,
      [&](double s, ModelGrad* g) { return iso_loss(model, nbrs, canonical, s, g); });
  run("rigid", weights.lambda_rigid,
      [&](double s, ModelGrad* g) { return rigid_loss(model, nbrs, weights.delta, s, g); });
  run("rot", weights.lambda_rot,
      [&](double s, ModelGrad* g) { return rot_loss(model, nbrs, weights.delta, s, g); });
  run("vel", weights.lambda_vel,
      [&](double s, ModelGrad* g) { return vel_loss(model, nbrs.nodes, s, g); });
  run("acc", weights.lambda_acc,
      [&](double s, ModelGrad* g) { return acc_loss(model, nbrs.nodes, s, g); });
  return total;
}

double anchor_loss(const Model& model, const Model& reference, const UncertaintyField& field,
                   const std::vector<Camera>& cameras, std::span<const int> nodes,
                   double norm_eps, double scale, ModelGrad* grad) {
  const int frames = model_frames(model);
  if (reference.size() != model.size() || model_frames(reference) != frames)
    throw ShapeError("reference trajectories do not match the model");
  if (static_cast<int>(cameras.size()) != frames)
    throw ShapeError("camera count does not match the model");
  if (field.gaussian_count != static_cast<int>(model.size()) || field.frame_count != frames)
    throw ShapeError("uncertainty field does not match the model");
  double sum = 0.0;
  for (int i : nodes) {
    for (int t = 0; t < frames; ++t) {
      const Mat3 m = inverse_uncertainty(field.scalar(i, t), cameras[t], field.params.r);
      const Vec3 d = model[i].positions[t] - reference[i].positions[t];
      const Vec3 md = m * d;
      const double val = std::sqrt(d.dot(md) + norm_eps);
      sum += val;
      if (grad && val > 0.0) grad->d_position[i][t] += (scale / val) * md;
    }
  }
  return sum;
}

double dqb_consistency_loss(const Model& model, const UncertaintyField& field,
                            const std::vector<Camera>& cameras, const MotionGraph& graph,
                            int canonical, double norm_eps, double scale, ModelGrad* grad) {
  const int frames = model_frames(model);
  if (static_cast<int>(cameras.size()) != frames)
    throw ShapeError("camera count does not match the model");
  if (field.gaussian_count != static_cast<int>(model.size()) || field.frame_count != frames)
    throw ShapeError("uncertainty field does not match the model");

  Mat34 vec_part = Mat34::Zero();
  vec_part(0, 1) = vec_part(1, 2) = vec_part(2, 3) = 1.0;

  struct NodeTerm {
    int j = 0;
    double ws = 0.0;  // weight times hemisphere sign
    Vec4 qt_hat, qn_hat, rj;
    Vec3 p_n;
    Vec4 tq;  // pure translation quaternion (0, tr)
  };
  std::vector<NodeTerm> terms;

  double sum = 0.0;
  for (size_t a = 0; a < graph.non_key_nodes.size(); ++a) {
    const int i = graph.non_key_nodes[a];
    const auto& edges = graph.inherited_edges[a];
    const Vec3& p_in = model[i].positions[canonical];
    for (int t = 0; t < frames; ++t) {
      terms.clear();
      Vec4 sum_r = Vec4::Zero(), sum_d = Vec4::Zero();
      Vec4 ref = Vec4::Zero();
      for (const auto& e : edges) {
        NodeTerm nt;
        nt.j = e.target;
        nt.qn_hat = qnormalized(model[nt.j].rotations[canonical]);
        nt.qt_hat = qnormalized(model[nt.j].rotations[t]);
        nt.rj = qmul(nt.qt_hat, qconj(nt.qn_hat));
        nt.p_n = model[nt.j].positions[canonical];
        const Vec3 tr = model[nt.j].positions[t] - qrotate(nt.rj, nt.p_n);
        nt.tq = Vec4(0.0, tr[0], tr[1], tr[2]);
        const Vec4 qd = 0.5 * qmul(nt.tq, nt.rj);
        if (terms.empty()) ref = nt.rj;
        const double sign = ref.dot(nt.rj) < 0.0 ? -1.0 : 1.0;
        nt.ws = e.weight * sign;
        sum_r += nt.ws * nt.rj;
        sum_d += nt.ws * qd;
        terms.push_back(nt);
      }
      const double nr = sum_r.norm();
      if (nr < 1e-12)
        throw NumericError("degenerate dual quaternion blend: real part vanished");
      const Vec4 qr_hat = sum_r / nr;
      const Vec4 dual0 = sum_d / nr;
      const Vec4 qd_hat = dual0 - qr_hat * qr_hat.dot(dual0);
      const Vec3 t_hat = 2.0 * (vec_part * qmul(qd_hat, qconj(qr_hat)));
      const Vec3 p_dqb = qrotate(qr_hat, p_in) + t_hat;

      const Vec3 d = model[i].positions[t] - p_dqb;
      const Mat3 m = inverse_uncertainty(field.scalar(i, t), cameras[t], field.params.r);
      const Vec3 md = m * d;
      const double val = std::sqrt(d.dot(md) + norm_eps);
      sum += val;
      if (!grad || val <= 0.0) continue;

      const Vec3 g = (scale / val) * md;
      grad->d_position[i][t] += g;
      const Vec3 gp = -g;  // d(loss)/d(p_dqb)
      grad->d_position[i][canonical] += qrot_matrix(qr_hat).transpose() * gp;

      Vec4 g_qr_hat = qrotate_jac_q(qr_hat, p_in).transpose() * gp;
      const Mat34 dt_dqd = 2.0 * (vec_part * qmul_jac_left(qconj(qr_hat)));
      const Mat34 dt_dqr = 2.0 * (vec_part * (qmul_jac_right(qd_hat) * qconj_jac()));
      const Vec4 g_qd_hat = dt_dqd.transpose() * gp;
      g_qr_hat += dt_dqr.transpose() * gp;

      // Normalization: qr_hat = Qr/n, qd_hat = Qd/n - Qr (Qr.Qd)/n^3.
      const double srd = sum_r.dot(sum_d);
      const Mat4 proj = (Mat4::Identity() - qr_hat * qr_hat.transpose()) / nr;
      const double n2 = nr * nr;
      const Mat4 dqd_dQr = -(sum_d * qr_hat.transpose()) / n2 -
                           (srd / (n2 * nr)) * Mat4::Identity() -
                           (sum_r * sum_d.transpose()) / (n2 * nr) +
                           (3.0 * srd / (n2 * n2)) * (sum_r * qr_hat.transpose());
      const Vec4 g_sum_r = proj * g_qr_hat + dqd_dQr.transpose() * g_qd_hat;
      const Vec4 g_sum_d = proj * g_qd_hat;

      for (const auto& nt : terms) {
        const Vec4 g_qd_j = nt.ws * g_sum_d;
        Vec4 g_rj = nt.ws * g_sum_r;
        g_rj += 0.5 * (qmul_jac_right(nt.tq).transpose() * g_qd_j);
        const Vec4 g_tq = 0.5 * (qmul_jac_left(nt.rj).transpose() * g_qd_j);
        const Vec3 g_tr = g_tq.tail<3>();
        grad->d_position[nt.j][t] += g_tr;
        grad->d_position[nt.j][canonical] -= qrot_matrix(nt.rj).transpose() * g_tr;
        g_rj -= qrotate_jac_q(nt.rj, nt.p_n).transpose() * g_tr;
        add_raw_rot_grad(grad, model, nt.j, t,
                         qmul_jac_left(qconj(nt.qn_hat)).transpose() * g_rj);
        add_raw_rot_grad(grad, model, nt.j, canonical,
                         qconj_jac() * (qmul_jac_right(nt.qt_hat).transpose() * g_rj));
      }
    }
  }
  return sum;
}

double key_loss(const Model& model, const Model& reference, const UncertaintyField& field,
                const std::vector<Camera>& cameras, const MotionGraph& graph, int canonical,
                const LossWeights& weights, ModelGrad* grad, LossReport* report) {
  const double anchor = anchor_loss(model, reference, field, cameras, graph.key_nodes,
                                    weights.norm_eps, 1.0, grad);
  if (report) report->add("key_anchor", anchor);
  return anchor + motion_loss(model, key_neighbor_set(graph), canonical, weights, 1.0, grad,
                              report, "key_");
}

double nonkey_loss(const Model& model, const Model& reference, const UncertaintyField& field,
                   const std::vector<Camera>& cameras, const MotionGraph& graph,
                   int canonical, const LossWeights& weights, ModelGrad* grad,
                   LossReport* report) {
  std::vector<int> all_nodes;
  std::span<const int> anchor_nodes(graph.non_key_nodes);
  if (weights.nonkey_sum_all_nodes) {
    all_nodes.resize(model.size());
    for (size_t i = 0; i < model.size(); ++i) all_nodes[i] = static_cast<int>(i);
    anchor_nodes = all_nodes;
  }
  const double anchor = anchor_loss(model, reference, field, cameras, anchor_nodes,
                                    weights.norm_eps, 1.0, grad);
  if (report) report->add("nonkey_anchor", anchor);
  const double dqb = dqb_consistency_loss(model, field, cameras, graph, canonical,
                                          weights.norm_eps, 1.0, grad);
  if (report) report->add("nonkey_dqb", dqb);
  return anchor + dqb +
         motion_loss(model, nonkey_neighbor_set(graph), canonical, weights, 1.0, grad,
                     report, "nonkey_");
}

double perception_loss(const Image& rendered, const Image& truth, const LossWeights& weights,
                       Image* grad_rendered) {
  if (!rendered.same_shape(truth)) throw ShapeError("perception images differ in shape");
  const size_t n = rendered.data.size();
  double l1 = 0.0;
  for (size_t i = 0; i < n; ++i) l1 += std::abs(rendered.data[i] - truth.data[i]);
  if (grad_rendered) *grad_rendered = Image(rendered.width, rendered.height, 0.0);
  // Bit-identical images sit exactly at the optimum: SSIM is 1 and both
  // gradients vanish, so skip the window sums.
  if (l1 == 0.0) return 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  Image ssim_grad;
  const double s = ssim(rendered, truth, SsimOptions{}, grad_rendered ? &ssim_grad : nullptr);
  if (grad_rendered) {
    for (size_t i = 0; i < n; ++i)
      grad_rendered->data[i] =
          weights.lambda_rgb_l1 * inv * sgn(rendered.data[i] - truth.data[i]) -
          weights.lambda_rgb_ssim * ssim_grad.data[i];
  }
  return weights.lambda_rgb_l1 * l1 * inv + weights.lambda_rgb_ssim * (1.0 - s);
}

void accumulate_photometric(const FrameRender& frame, const Model& model,
                            const Image& pixel_grad, double scale, ModelGrad* grad) {
  const auto& rec = frame.record.per_gaussian;
  if (rec.size() != model.size())
    throw ShapeError("weight record does not match the model");
  for (size_t i = 0; i < rec.size(); ++i) {
    if (rec[i].empty()) continue;
    const Vec3& c = model[i].color;
    const double alpha = model[i].opacity;
    Vec3 gc = Vec3::Zero();
    double ga = 0.0;
    for (const auto& pw : rec[i]) {
      const Vec3 pg(pixel_grad.data[3 * pw.pixel], pixel_grad.data[3 * pw.pixel + 1],
                    pixel_grad.data[3 * pw.pixel + 2]);
      gc += pw.weight * pg;
      ga += (pw.weight / alpha) * c.dot(pg);
    }
    grad->d_color[i] += scale * gc;
    grad->d_opacity[i] += scale * ga;
  }
}

namespace {

double batch_perception(const Model& model, const LossWeights& weights,
                        std::span<const BatchFrame> batch, ModelGrad* grad, int threads) {
  if (batch.empty()) return 0.0;
  const int b = static_cast<int>(batch.size());
  const double inv = 1.0 / b;
  std::vector<double> values(b);
  std::vector<Image> pixel_grads(grad ? b : 0);
  parallel_for(b, threads, [&](int begin, int end) {
    for (int f = begin; f < end; ++f)
      values[f] = perception_loss(batch[f].render->image, *batch[f].truth, weights,
                                  grad ? &pixel_grads[f] : nullptr);
  });
  double rgb = 0.0;
  for (int f = 0; f < b; ++f) {
    rgb += inv * values[f];
    if (grad) accumulate_photometric(*batch[f].render, model, pixel_grads[f], inv, grad);
  }
  return rgb;
}

}  // namespace

LossReport total_loss(const Model& model, const Model& reference,
                      const UncertaintyField& field, const std::vector<Camera>& cameras,
                      const MotionGraph& graph, int canonical, const LossWeights& weights,
                      std::span<const BatchFrame> batch, ModelGrad* grad, int threads) {
  LossReport report;
  report.add("rgb", batch_perception(model, weights, batch, grad, threads));
  key_loss(model, reference, field, cameras, graph, canonical, weights, grad, &report);
  nonkey_loss(model, reference, field, cameras, graph, canonical, weights, grad, &report);
  return report;
}

LossReport vanilla_total_loss(const Model& model, const NeighborSet& nbrs, int canonical,
                              const LossWeights& weights, std::span<const BatchFrame> batch,
                              ModelGrad* grad, int threads) {
  LossReport report;
  report.add("rgb", batch_perception(model, weights, batch, grad, threads));
  motion_loss(model, nbrs, canonical, weights, 1.0, grad, &report, "motion_");
  return report;
}

}  // namespace usplat
