#include "planeval/cost/trajectory_cost.hpp"

#include <cmath>
#include <limits>

#include "planeval/core/dynamics.hpp"
#include "planeval/core/geometry.hpp"

namespace planeval::cost {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Variable keys for per-frame derivative blocks.
int state_key(int tau) { return 2 * tau; }
int control_key(int t) { return 2 * t + 1; }
bool is_state_key(int key) { return (key % 2) == 0; }
int key_index(int key) { return key / 2; }

// Derivative blocks of one frame cost with respect to the rollout variables
// it touches. Hessian blocks are stored once per unordered variable pair
// (canonical key order); diagonal blocks hold the full symmetric matrix.
struct FrameLocal {
  std::map<int, Eigen::VectorXd> grad;
  std::map<std::pair<int, int>, Eigen::MatrixXd> hess;

  Eigen::VectorXd& grad_block(int key, int dim) {
    auto it = grad.find(key);
    if (it == grad.end()) it = grad.emplace(key, Eigen::VectorXd::Zero(dim)).first;
    return it->second;
  }

  Eigen::MatrixXd& hess_block(int a, int b, int rows, int cols) {
    auto it = hess.find({a, b});
    if (it == hess.end()) {
      it = hess.emplace(std::pair{a, b}, Eigen::MatrixXd::Zero(rows, cols)).first;
    }
    return it->second;
  }

  // Adds a symmetric diagonal contribution d^2c/dx_a^2.
  void add_sym(int a, const Eigen::MatrixXd& block) {
    hess_block(a, a, block.rows(), block.cols()) += block;
  }

  // Adds M as the cross second derivative between two appearances x_a, x_b;
  // when both map to the same variable the fold-back M + M^T applies.
  void add_cross(int a, int dim_a, int b, int dim_b, const Eigen::MatrixXd& M) {
    if (a == b) {
      hess_block(a, a, dim_a, dim_a) += M + M.transpose();
    } else if (a < b) {
      hess_block(a, b, dim_a, dim_b) += M;
    } else {
      hess_block(b, a, dim_b, dim_a) += M.transpose();
    }
  }
};

// Gaussian kernel in the 2-D separation vector; smooth everywhere.
struct Gauss {
  double value = 0.0;
  Vec2 grad{0.0, 0.0};
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
};

Gauss gauss(const Vec2& delta, double sigma, bool want_hess) {
  Gauss g;
  const double s2 = sigma * sigma;
  g.value = std::exp(-delta.squaredNorm() / (2.0 * s2));
  g.grad = -(g.value / s2) * delta;
  if (want_hess) {
    g.hess = g.value * (delta * delta.transpose() / (s2 * s2) -
                        Eigen::Matrix2d::Identity() / s2);
  }
  return g;
}

// Where a future sample came from, for routing prediction gradients.
struct FutureSample {
  Vec2 position{0.0, 0.0};
  int idx[2] = {-1, -1};
  double wgt[2] = {0.0, 0.0};
  int n_routes = 0;
  bool from_detection = false;
};

struct AgentView {
  const AgentId* id = nullptr;
  const std::vector<Vec2>* track = nullptr;
  const AgentFutures* futures = nullptr;
  const Vec2* detection = nullptr;
  const Vec2* det_velocity = nullptr;
};

struct Ctx {
  const TrajectoryProblem* pb = nullptr;
  const CostModel* model = nullptr;
  const Scene* scene = nullptr;
  const CostInputs* in = nullptr;
  DynamicsMode mode = DynamicsMode::kUnicycle;
  int ds = 3;
  double dt = 0.0;
  Vec2 goal{0.0, 0.0};
  std::vector<AgentView> agents;

  Vec2 agent_current(std::size_t a, long scene_step) const {
    const AgentView& view = agents[a];
    if (in->detection_mode) {
      return *view.detection + static_cast<double>(scene_step) * (*view.det_velocity);
    }
    return extrapolated_position(*view.track, scene_step);
  }

  int mode_count(std::size_t a) const {
    return in->detection_mode ? 1 : static_cast<int>(agents[a].futures->modes.size());
  }

  double mode_prob(std::size_t a, int k) const {
    return in->detection_mode ? 1.0 : agents[a].futures->modes[k].prob;
  }

  FutureSample agent_future(std::size_t a, int k, long scene_step) const {
    FutureSample sample;
    if (in->detection_mode) {
      const AgentView& view = agents[a];
      sample.position =
          *view.detection + static_cast<double>(scene_step) * (*view.det_velocity);
      sample.from_detection = true;
      return sample;
    }
    const std::vector<Vec2>& wp = agents[a].futures->modes[k].waypoints;
    const long n = static_cast<long>(wp.size());
    const long idx = scene_step - 1;  // waypoints start at scene step 1
    if (idx < 0) throw std::invalid_argument("future requested before scene step 1");
    if (idx < n) {
      sample.position = wp[idx];
      sample.idx[0] = static_cast<int>(idx);
      sample.wgt[0] = 1.0;
      sample.n_routes = 1;
    } else if (n == 1) {
      sample.position = wp[0];
      sample.idx[0] = 0;
      sample.wgt[0] = 1.0;
      sample.n_routes = 1;
    } else {
      const double m = static_cast<double>(idx - (n - 1));
      sample.position = wp[n - 1] + m * (wp[n - 1] - wp[n - 2]);
      sample.idx[0] = static_cast<int>(n - 1);
      sample.wgt[0] = 1.0 + m;
      sample.idx[1] = static_cast<int>(n - 2);
      sample.wgt[1] = -m;
      sample.n_routes = 2;
    }
    return sample;
  }
};

Ctx make_ctx(const TrajectoryProblem& pb) {
  if (pb.model == nullptr || pb.scene == nullptr || pb.inputs == nullptr) {
    throw std::invalid_argument("trajectory problem is missing model/scene/inputs");
  }
  Ctx ctx;
  ctx.pb = &pb;
  ctx.model = pb.model;
  ctx.scene = pb.scene;
  ctx.in = pb.inputs;
  ctx.mode = pb.model->dynamics;
  ctx.ds = state_dim(ctx.mode);
  ctx.dt = pb.scene->dt;
  ctx.goal = pb.goal_override.value_or(pb.scene->goal);

  const bool toy = pb.model->feature_set() == FeatureSet::kToy4;
  if (ctx.in->detection_mode) {
    if (toy) {
      throw std::invalid_argument("detection inputs require the driving feature set");
    }
    for (const auto& [id, det] : ctx.in->detections) {
      AgentView view;
      view.id = &id;
      const auto it = pb.scene->agents.find(id);
      if (it == pb.scene->agents.end()) {
        throw std::invalid_argument("detection for unknown agent \"" + id + "\"");
      }
      view.track = &it->second.positions;
      view.detection = &det;
      view.det_velocity = &ctx.in->detection_velocities.at(id);
      ctx.agents.push_back(view);
    }
  } else {
    for (const auto& [id, traj] : pb.scene->agents) {
      AgentView view;
      view.id = &id;
      view.track = &traj.positions;
      const auto it = ctx.in->futures.find(id);
      if (it == ctx.in->futures.end()) {
        throw std::invalid_argument("missing prediction for agent \"" + id + "\"");
      }
      view.futures = &it->second;
      ctx.agents.push_back(view);
    }
  }

  if (toy && ctx.agents.size() > 1) {
    throw std::invalid_argument("the four-term cost supports at most one other agent");
  }
  if (!toy && pb.scene->lanes.empty()) {
    throw std::invalid_argument("the driving cost requires at least one lane");
  }
  if (!toy && !pb.scene->ego.has_speeds()) {
    throw std::invalid_argument("extended-unicycle scenes require ego speeds");
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Frame processing

struct PredSink {
  PredictionGradients* out = nullptr;
  const Ctx* ctx = nullptr;

  void add_future(std::size_t a, int k, const FutureSample& sample, const Vec2& grad) {
    const AgentId& id = *ctx->agents[a].id;
    if (sample.from_detection) {
      out->detections[id] += grad;
      return;
    }
    auto& per_mode = out->waypoints.at(id);
    for (int r = 0; r < sample.n_routes; ++r) {
      per_mode[k][sample.idx[r]] += sample.wgt[r] * grad;
    }
  }

  void add_current(std::size_t a, long scene_step, const Vec2& grad) {
    // In detection mode the current position at step s is det + s * velocity,
    // so the route back to the detection is the identity.
    (void)scene_step;
    out->detections[*ctx->agents[a].id] += grad;
  }
};

// Four-term cost frame. Returns phi; accumulates weighted derivative blocks.
FeatureVector process_toy_frame(const Ctx& ctx, int i, const EgoState& s,
                                const ControlInput& u, const Eigen::VectorXd& w,
                                FrameLocal* out, PredSink* sink, bool want_hess) {
  const long scene_step = ctx.pb->start_step + i;
  const double sigma = ctx.model->rbf.sigma;

  ToyFrame frame;
  frame.ego_position = s.position();
  frame.ego_heading = s.heading;
  frame.control = u;
  frame.goal = ctx.goal;
  frame.dt = ctx.dt;

  FutureSample next_sample;
  if (!ctx.agents.empty()) {
    frame.agent_position = ctx.agent_current(0, scene_step);
    next_sample = ctx.agent_future(0, 0, scene_step + 1);
    if (ctx.mode_count(0) != 1) {
      throw std::invalid_argument("the four-term cost expects a single prediction mode");
    }
    frame.agent_predicted = next_sample.position;
  }

  const FeatureVector phi = features_toy(frame, ctx.model->rbf);
  if (out == nullptr && sink == nullptr) return phi;

  const int sk = state_key(i);
  const int ck = control_key(i);
  const double ch = std::cos(s.heading);
  const double sh = std::sin(s.heading);

  // goal term
  if (out != nullptr) {
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(3);
    gs.head<2>() = w[0] * 2.0 * (frame.ego_position - ctx.goal);
    out->grad_block(sk, 3) += gs;
    if (want_hess) {
      Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(3, 3);
      Hs(0, 0) = Hs(1, 1) = 2.0 * w[0];
      out->add_sym(sk, Hs);
    }

    // control effort
    out->grad_block(ck, 2) += w[1] * 2.0 * u.vec();
    if (want_hess) {
      out->add_sym(ck, 2.0 * w[1] * Eigen::Matrix2d::Identity());
    }
  }

  if (ctx.agents.empty()) return phi;

  // reactive RBF at the agent's current position
  if (out != nullptr) {
    const Vec2 delta = frame.ego_position - *frame.agent_position;
    const Gauss g = gauss(delta, sigma, want_hess);
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(3);
    gs.head<2>() = w[2] * g.grad;
    out->grad_block(sk, 3) += gs;
    if (want_hess) {
      Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(3, 3);
      Hs.topLeftCorner<2, 2>() = w[2] * g.hess;
      out->add_sym(sk, Hs);
    }
  }

  // predictive RBF one step ahead; the ego side is p + dt v (cos h, sin h)
  {
    const double v = u.longitudinal;
    const Vec2 delta = toy_ego_one_step(frame) - *frame.agent_predicted;
    const Gauss g = gauss(delta, sigma, want_hess || out != nullptr);

    if (sink != nullptr) {
      sink->add_future(0, 0, next_sample, -w[3] * g.grad);
    }
    if (out != nullptr) {
      // local variables q = (x, y, heading | v, yaw rate)
      Eigen::Matrix<double, 2, 5> J = Eigen::Matrix<double, 2, 5>::Zero();
      J(0, 0) = 1.0;
      J(1, 1) = 1.0;
      J.col(2) = ctx.dt * v * Vec2(-sh, ch);
      J.col(3) = ctx.dt * Vec2(ch, sh);

      const Eigen::Matrix<double, 5, 1> gq = J.transpose() * (w[3] * g.grad);
      out->grad_block(sk, 3) += gq.head<3>();
      out->grad_block(ck, 2) += gq.tail<2>();

      if (want_hess) {
        Eigen::Matrix<double, 5, 5> Hq = J.transpose() * (w[3] * g.hess) * J;
        const Vec2 ddh = ctx.dt * v * Vec2(-ch, -sh);   // d^2 delta / d heading^2
        const Vec2 ddhv = ctx.dt * Vec2(-sh, ch);       // d^2 delta / d heading d v
        Hq(2, 2) += w[3] * g.grad.dot(ddh);
        Hq(2, 3) += w[3] * g.grad.dot(ddhv);
        Hq(3, 2) += w[3] * g.grad.dot(ddhv);

        out->add_sym(sk, Hq.topLeftCorner<3, 3>());
        out->add_cross(sk, 3, ck, 2, Hq.topRightCorner<3, 2>());
        out->add_sym(ck, Hq.bottomRightCorner<2, 2>());
      }
    }
  }
  return phi;
}

// Six-term driving cost frame.
FeatureVector process_drive_frame(const Ctx& ctx, int i, int n_controls,
                                  const std::vector<EgoState>& states,
                                  const ControlInput& u, const Eigen::VectorXd& w,
                                  FrameLocal* out, PredSink* sink, bool want_hess) {
  const long scene_step = ctx.pb->start_step + i;
  const double sigma = ctx.model->rbf.sigma;
  const int h = ctx.model->horizon;
  const EgoState& s = states[i];

  DriveFrame frame;
  frame.ego_position = s.position();
  frame.ego_heading = s.heading;
  frame.ego_speed = s.speed;
  frame.control = u;
  frame.goal = ctx.goal;
  frame.lanes = std::span<const Lane>(ctx.scene->lanes);
  frame.dt = ctx.dt;

  // Ego future over the lookahead window: rolled-out states while available,
  // constant-velocity extrapolation from the final state beyond.
  struct EgoFutureVar {
    int key = -1;
    bool extrapolated = false;
    double c_ex = 0.0;
  };
  std::vector<EgoFutureVar> future_vars(h);
  frame.ego_future.resize(h);
  const EgoState& last = states[n_controls];
  for (int tp = 1; tp <= h; ++tp) {
    const int j = i + tp;
    EgoFutureVar& var = future_vars[tp - 1];
    if (j <= n_controls) {
      frame.ego_future[tp - 1] = states[j].position();
      var.key = state_key(j);
    } else {
      var.extrapolated = true;
      var.c_ex = static_cast<double>(j - n_controls) * ctx.dt;
      var.key = state_key(n_controls);
      frame.ego_future[tp - 1] =
          last.position() +
          var.c_ex * last.speed * Vec2(std::cos(last.heading), std::sin(last.heading));
    }
  }

  std::vector<std::vector<FutureSample>> samples(ctx.agents.size());
  frame.agent_positions.resize(ctx.agents.size());
  frame.agent_futures.resize(ctx.agents.size());
  for (std::size_t a = 0; a < ctx.agents.size(); ++a) {
    frame.agent_positions[a] = ctx.agent_current(a, scene_step);
    const int km = ctx.mode_count(a);
    frame.agent_futures[a].resize(km);
    samples[a].resize(km * h);
    for (int k = 0; k < km; ++k) {
      frame.agent_futures[a][k].prob = ctx.mode_prob(a, k);
      frame.agent_futures[a][k].states.resize(h);
      for (int tp = 1; tp <= h; ++tp) {
        FutureSample sample = ctx.agent_future(a, k, scene_step + tp);
        frame.agent_futures[a][k].states[tp - 1] = sample.position;
        samples[a][k * h + (tp - 1)] = sample;
      }
    }
  }

  const FeatureVector phi = features_drive(frame, ctx.model->rbf);
  if (out == nullptr && sink == nullptr) return phi;

  const LaneProjection proj = project_to_lane(frame.ego_position, frame.lanes);
  const DriveCollision coll = drive_collision_terms(frame);

  const int sk = state_key(i);
  const int ck = control_key(i);
  const int ds = ctx.ds;

  if (out != nullptr) {
    // lane offset
    {
      Eigen::VectorXd gs = Eigen::VectorXd::Zero(ds);
      gs.head<2>() = w[0] * 2.0 * (frame.ego_position - proj.point);
      out->grad_block(sk, ds) += gs;
      if (want_hess) {
        Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(ds, ds);
        if (proj.clamped) {
          Hs.topLeftCorner<2, 2>() = 2.0 * w[0] * Eigen::Matrix2d::Identity();
        } else {
          const Eigen::Matrix2d P = Eigen::Matrix2d::Identity() -
                                    proj.segment_dir * proj.segment_dir.transpose();
          Hs.topLeftCorner<2, 2>() = 2.0 * w[0] * P;
        }
        out->add_sym(sk, Hs);
      }
    }

    // lane heading deviation; the projected tangent moves with the ego
    // through the arclength parameter.
    {
      const double dpsi = wrap_angle(frame.ego_heading - proj.heading);
      const double k_rate = proj.heading_rate;
      const Vec2 e = proj.segment_dir;
      Eigen::VectorXd gs = Eigen::VectorXd::Zero(ds);
      gs[2] = w[1] * 2.0 * dpsi;
      gs.head<2>() += w[1] * (-2.0 * dpsi * k_rate) * e;
      out->grad_block(sk, ds) += gs;
      if (want_hess) {
        Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(ds, ds);
        Hs(2, 2) = 2.0 * w[1];
        Hs.topLeftCorner<2, 2>() = 2.0 * w[1] * k_rate * k_rate * e * e.transpose();
        Hs.block<2, 1>(0, 2) = -2.0 * w[1] * k_rate * e;
        Hs.block<1, 2>(2, 0) = (-2.0 * w[1] * k_rate * e).transpose();
        out->add_sym(sk, Hs);
      }
    }

    // goal
    {
      Eigen::VectorXd gs = Eigen::VectorXd::Zero(ds);
      gs.head<2>() = w[2] * 2.0 * (frame.ego_position - ctx.goal);
      out->grad_block(sk, ds) += gs;
      if (want_hess) {
        Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(ds, ds);
        Hs(0, 0) = Hs(1, 1) = 2.0 * w[2];
        out->add_sym(sk, Hs);
      }
    }

    // control effort
    out->grad_block(ck, 2) += w[4] * 2.0 * u.vec();
    if (want_hess) out->add_sym(ck, 2.0 * w[4] * Eigen::Matrix2d::Identity());
  }

  // reactive RBF at the nearest agent
  if (coll.reactive_agent >= 0) {
    const Vec2 delta = frame.ego_position - frame.agent_positions[coll.reactive_agent];
    const Gauss g = gauss(delta, sigma, want_hess);
    if (out != nullptr) {
      Eigen::VectorXd gs = Eigen::VectorXd::Zero(ds);
      gs.head<2>() = w[3] * g.grad;
      out->grad_block(sk, ds) += gs;
      if (want_hess) {
        Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(ds, ds);
        Hs.topLeftCorner<2, 2>() = w[3] * g.hess;
        out->add_sym(sk, Hs);
      }
    }
    if (sink != nullptr && ctx.in->detection_mode) {
      sink->add_current(coll.reactive_agent, scene_step, -w[3] * g.grad);
    }
  }

  // predictive RBF of the expected closest approach
  if (coll.predictive_agent >= 0 && std::isfinite(coll.predictive_mix)) {
    const int a = coll.predictive_agent;
    const int km = ctx.mode_count(a);
    const double m = coll.predictive_mix;
    const double s2 = sigma * sigma;
    const double rho = std::exp(-m * m / (2.0 * s2));
    const double rho_d = -(m / s2) * rho;
    const double rho_dd = (m * m / (s2 * s2) - 1.0 / s2) * rho;

    struct ModeChain {
      double prob = 0.0;
      double dist = 0.0;
      Vec2 unit{0.0, 0.0};
      int tp = -1;  // achieving lookahead index (0-based)
    };
    std::vector<ModeChain> chains(km);
    for (int k = 0; k < km; ++k) {
      ModeChain& chain = chains[k];
      chain.prob = ctx.mode_prob(a, k);
      chain.tp = coll.mode_steps[k];
      chain.dist = coll.mode_distances[k];
      const Vec2 delta =
          frame.ego_future[chain.tp] - frame.agent_futures[a][k].states[chain.tp];
      chain.unit = chain.dist > 0.0 ? Vec2(delta / chain.dist) : Vec2(0.0, 0.0);
    }

    // 2 x ds Jacobian of the ego future sample w.r.t. its state variable.
    const auto future_jac = [&](const EgoFutureVar& var) {
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2, ds);
      J(0, 0) = 1.0;
      J(1, 1) = 1.0;
      if (var.extrapolated) {
        const double chl = std::cos(last.heading);
        const double shl = std::sin(last.heading);
        J.col(2) = var.c_ex * last.speed * Vec2(-shl, chl);
        J.col(3) = var.c_ex * Vec2(chl, shl);
      }
      return J;
    };

    for (int k = 0; k < km; ++k) {
      const ModeChain& chain = chains[k];
      const Vec2 gvec = w[5] * rho_d * chain.prob * chain.unit;
      const EgoFutureVar& var = future_vars[chain.tp];

      if (sink != nullptr) {
        sink->add_future(a, k, samples[a][k * h + chain.tp], -gvec);
      }
      if (out == nullptr) continue;

      const Eigen::MatrixXd J = future_jac(var);
      out->grad_block(var.key, ds) += J.transpose() * gvec;

      if (want_hess && var.extrapolated) {
        // curvature of the extrapolation map itself
        const double chl = std::cos(last.heading);
        const double shl = std::sin(last.heading);
        const Vec2 ddh = var.c_ex * last.speed * Vec2(-chl, -shl);
        const Vec2 ddhv = var.c_ex * Vec2(-shl, chl);
        Eigen::MatrixXd Hex = Eigen::MatrixXd::Zero(ds, ds);
        Hex(2, 2) = gvec.dot(ddh);
        Hex(2, 3) = gvec.dot(ddhv);
        Hex(3, 2) = Hex(2, 3);
        out->add_sym(var.key, Hex);
      }
    }

    if (out != nullptr && want_hess) {
      for (int k = 0; k < km; ++k) {
        const ModeChain& ck1 = chains[k];
        const EgoFutureVar& vk = future_vars[ck1.tp];
        const Eigen::MatrixXd Jk = future_jac(vk);
        for (int k2 = k; k2 < km; ++k2) {
          const ModeChain& ck2 = chains[k2];
          const EgoFutureVar& vk2 = future_vars[ck2.tp];
          Eigen::Matrix2d D = w[5] * rho_dd * ck1.prob * ck2.prob * ck1.unit *
                              ck2.unit.transpose();
          if (k == k2 && ck1.dist > 0.0) {
            D += w[5] * rho_d * ck1.prob *
                 (Eigen::Matrix2d::Identity() - ck1.unit * ck1.unit.transpose()) /
                 ck1.dist;
          }
          const Eigen::MatrixXd M = Jk.transpose() * D * future_jac(vk2);
          if (k == k2) {
            out->add_sym(vk.key, M);
          } else {
            out->add_cross(vk.key, ds, vk2.key, ds, M);
          }
        }
      }
    }
  }

  return phi;
}

FeatureVector process_frame(const Ctx& ctx, int i, int n_controls,
                            const std::vector<EgoState>& states, const ControlInput& u,
                            const Eigen::VectorXd& w, FrameLocal* out, PredSink* sink,
                            bool want_hess) {
  if (ctx.model->feature_set() == FeatureSet::kToy4) {
    return process_toy_frame(ctx, i, states[i], u, w, out, sink, want_hess);
  }
  return process_drive_frame(ctx, i, n_controls, states, u, w, out, sink, want_hess);
}

int frame_count(const TrajectoryProblem& pb, std::span<const ControlInput> controls) {
  if (controls.empty()) {
    throw std::invalid_argument("trajectory cost requires at least one control");
  }
  const int n = static_cast<int>(controls.size());
  if (pb.frame_limit && (*pb.frame_limit < 1 || *pb.frame_limit > n)) {
    throw std::invalid_argument("frame limit out of range");
  }
  return pb.frame_limit.value_or(n);
}

struct FramePass {
  FeatureVector totals;
  std::vector<EgoState> states;
  std::vector<FrameLocal> frames;  // empty unless derivatives were requested
};

FramePass run_frames(const Ctx& ctx, std::span<const ControlInput> controls,
                     const Eigen::VectorXd& weights, bool want_locals, PredSink* sink,
                     bool want_hess) {
  FramePass pass;
  const int n = static_cast<int>(controls.size());
  const int frames = frame_count(*ctx.pb, controls);
  pass.states = rollout(ctx.pb->start_state, controls, ctx.dt, ctx.mode);
  pass.totals = FeatureVector::Zero(feature_count(ctx.model->feature_set()));
  if (want_locals) pass.frames.resize(frames);
  for (int i = 0; i < frames; ++i) {
    FrameLocal* local = want_locals ? &pass.frames[i] : nullptr;
    pass.totals +=
        process_frame(ctx, i, n, pass.states, controls[i], weights, local, sink, want_hess);
  }
  return pass;
}

// Total gradient of every frame with respect to each rollout state.
std::vector<Eigen::VectorXd> state_partials(const Ctx& ctx, int n_controls,
                                            const std::vector<FrameLocal>& frames,
                                            Eigen::VectorXd* control_direct) {
  std::vector<Eigen::VectorXd> pbar(n_controls + 1, Eigen::VectorXd::Zero(ctx.ds));
  for (const FrameLocal& fl : frames) {
    for (const auto& [key, block] : fl.grad) {
      if (is_state_key(key)) {
        pbar[key_index(key)] += block;
      } else if (control_direct != nullptr) {
        control_direct->segment(2 * key_index(key), 2) += block;
      }
    }
  }
  return pbar;
}

Eigen::VectorXd adjoint_gradient(const Ctx& ctx, std::span<const ControlInput> controls,
                                 const std::vector<EgoState>& states,
                                 const std::vector<FrameLocal>& frames) {
  const int n = static_cast<int>(controls.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * n);
  std::vector<Eigen::VectorXd> pbar = state_partials(ctx, n, frames, &g);

  Eigen::VectorXd lambda = pbar[n];
  for (int t = n - 1; t >= 0; --t) {
    const DynamicsJacobians jac = linearize_dynamics(states[t], controls[t], ctx.dt, ctx.mode);
    g.segment(2 * t, 2) += jac.control.transpose() * lambda;
    lambda = pbar[t] + jac.state.transpose() * lambda;
  }
  return g;
}

Eigen::MatrixXd forward_hessian(const Ctx& ctx, std::span<const ControlInput> controls,
                                const std::vector<EgoState>& states,
                                const std::vector<FrameLocal>& frames) {
  const int n = static_cast<int>(controls.size());
  const int nz = 2 * n;
  const int ds = ctx.ds;

  std::vector<Eigen::VectorXd> pbar = state_partials(ctx, n, frames, nullptr);

  std::vector<Eigen::MatrixXd> S(n + 1, Eigen::MatrixXd::Zero(ds, nz));
  std::vector<Eigen::MatrixXd> T(ds, Eigen::MatrixXd::Zero(nz, nz));
  std::vector<Eigen::MatrixXd> T_next(ds, Eigen::MatrixXd::Zero(nz, nz));
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nz, nz);

  for (int t = 0; t < n; ++t) {
    const DynamicsJacobians jac = linearize_dynamics(states[t], controls[t], ctx.dt, ctx.mode);
    const std::vector<Eigen::MatrixXd> f2 = step_hessians(states[t], controls[t], ctx.dt, ctx.mode);

    S[t + 1] = jac.state * S[t];
    S[t + 1].block(0, 2 * t, ds, 2) += jac.control;

    for (int ic = 0; ic < ds; ++ic) {
      Eigen::MatrixXd& Ti = T_next[ic];
      Ti.setZero();
      for (int jc = 0; jc < ds; ++jc) {
        const double a = jac.state(ic, jc);
        if (a != 0.0) Ti += a * T[jc];
      }
      const Eigen::MatrixXd& F2 = f2[ic];
      if (F2.isZero(0.0)) continue;
      const Eigen::MatrixXd F2ss = F2.topLeftCorner(ds, ds);
      const Eigen::MatrixXd F2su = F2.topRightCorner(ds, 2);
      const Eigen::MatrixXd F2uu = F2.bottomRightCorner(2, 2);
      if (!F2ss.isZero(0.0)) Ti += S[t].transpose() * F2ss * S[t];
      if (!F2su.isZero(0.0)) {
        const Eigen::MatrixXd M = S[t].transpose() * F2su;  // nz x 2
        Ti.block(0, 2 * t, nz, 2) += M;
        Ti.block(2 * t, 0, 2, nz) += M.transpose();
      }
      if (!F2uu.isZero(0.0)) Ti.block(2 * t, 2 * t, 2, 2) += F2uu;
    }
    T.swap(T_next);

    for (int ic = 0; ic < ds; ++ic) {
      const double coef = pbar[t + 1][ic];
      if (coef != 0.0) H += coef * T[ic];
    }
  }

  // frame-local curvature through the first-order sensitivities
  for (const FrameLocal& fl : frames) {
    for (const auto& [keys, Q] : fl.hess) {
      const auto [ka, kb] = keys;
      const bool sa = is_state_key(ka);
      const bool sb = is_state_key(kb);
      const int ia = key_index(ka);
      const int ib = key_index(kb);
      if (sa && sb) {
        if (ka == kb) {
          H += S[ia].transpose() * Q * S[ia];
        } else {
          const Eigen::MatrixXd M = S[ia].transpose() * Q * S[ib];
          H += M;
          H += M.transpose();
        }
      } else if (sa && !sb) {
        const Eigen::MatrixXd M = S[ia].transpose() * Q;  // nz x 2
        H.block(0, 2 * ib, nz, 2) += M;
        H.block(2 * ib, 0, 2, nz) += M.transpose();
      } else if (!sa && sb) {
        const Eigen::MatrixXd M = Q * S[ib];  // 2 x nz
        H.block(2 * ia, 0, 2, nz) += M;
        H.block(0, 2 * ia, nz, 2) += M.transpose();
      } else {
        if (ka == kb) {
          H.block(2 * ia, 2 * ia, 2, 2) += Q;
        } else {
          H.block(2 * ia, 2 * ib, 2, 2) += Q;
          H.block(2 * ib, 2 * ia, 2, 2) += Q.transpose();
        }
      }
    }
  }

  return 0.5 * (H + H.transpose());
}

}  // namespace

CostInputs gt_future_inputs(const Scene& scene) {
  CostInputs inputs;
  for (const auto& [id, traj] : scene.agents) {
    FutureMode mode;
    mode.prob = 1.0;
    mode.waypoints.assign(traj.positions.begin() + 1, traj.positions.end());
    inputs.futures[id].modes.push_back(std::move(mode));
  }
  return inputs;
}

CostInputs prediction_inputs(const Scene& scene, const PredictionSet& preds) {
  preds.validate(scene);
  CostInputs inputs;
  for (const auto& [id, traj] : scene.agents) {
    const auto it = preds.agents.find(id);
    if (it == preds.agents.end()) {
      throw std::invalid_argument("missing prediction for agent \"" + id + "\"");
    }
    AgentFutures futures;
    for (const TrajectoryMode& mode : it->second) {
      futures.modes.push_back(FutureMode{mode.prob, mode.states});
    }
    inputs.futures.emplace(id, std::move(futures));
  }
  return inputs;
}

CostInputs detection_inputs(const Scene& scene, const DetectionSet& dets) {
  dets.validate();
  CostInputs inputs;
  inputs.detection_mode = true;
  for (const DetectionBox& box : dets.boxes) {
    if (!box.agent_id) continue;  // unmatched boxes carry no agent to attribute
    const auto it = scene.agents.find(*box.agent_id);
    if (it == scene.agents.end()) {
      throw std::invalid_argument("detection for unknown agent \"" + *box.agent_id + "\"");
    }
    inputs.detections[*box.agent_id] = box.center;
    const std::vector<Vec2>& track = it->second.positions;
    inputs.detection_velocities[*box.agent_id] =
        track.size() >= 2 ? Vec2(track[1] - track[0]) : Vec2(0.0, 0.0);
  }
  return inputs;
}

TrajectoryProblem make_problem(const CostModel& model, const Scene& scene,
                               const CostInputs& inputs, int start_step) {
  model.validate();
  if (start_step < 0 || start_step >= static_cast<int>(scene.ego.size())) {
    throw std::invalid_argument("start step outside the ego trajectory");
  }
  TrajectoryProblem pb;
  pb.model = &model;
  pb.scene = &scene;
  pb.inputs = &inputs;
  pb.start_step = start_step;
  pb.start_state = scene.ego.state_at(start_step);
  return pb;
}

double trajectory_cost(const TrajectoryProblem& problem,
                       std::span<const ControlInput> controls) {
  const Ctx ctx = make_ctx(problem);
  const FramePass pass =
      run_frames(ctx, controls, problem.model->theta.weights, false, nullptr, false);
  return problem.model->theta.weights.dot(pass.totals);
}

FeatureVector feature_totals(const TrajectoryProblem& problem,
                             std::span<const ControlInput> controls) {
  const Ctx ctx = make_ctx(problem);
  return run_frames(ctx, controls, problem.model->theta.weights, false, nullptr, false)
      .totals;
}

ValueGrad cost_gradient(const TrajectoryProblem& problem,
                        std::span<const ControlInput> controls) {
  const Ctx ctx = make_ctx(problem);
  const FramePass pass =
      run_frames(ctx, controls, problem.model->theta.weights, true, nullptr, false);
  ValueGrad out;
  out.value = problem.model->theta.weights.dot(pass.totals);
  out.grad = adjoint_gradient(ctx, controls, pass.states, pass.frames);
  return out;
}

ValueGradHess cost_grad_hess(const TrajectoryProblem& problem,
                             std::span<const ControlInput> controls) {
  const Ctx ctx = make_ctx(problem);
  const FramePass pass =
      run_frames(ctx, controls, problem.model->theta.weights, true, nullptr, true);
  ValueGradHess out;
  out.value = problem.model->theta.weights.dot(pass.totals);
  out.grad = adjoint_gradient(ctx, controls, pass.states, pass.frames);
  out.hess = forward_hessian(ctx, controls, pass.states, pass.frames);
  return out;
}

FeatureDerivatives feature_grad_hess(const TrajectoryProblem& problem,
                                     std::span<const ControlInput> controls) {
  const Ctx ctx = make_ctx(problem);
  const int nf = feature_count(problem.model->feature_set());
  FeatureDerivatives out;
  out.grads.reserve(nf);
  out.hessians.reserve(nf);
  for (int f = 0; f < nf; ++f) {
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(nf);
    unit[f] = 1.0;
    const FramePass pass = run_frames(ctx, controls, unit, true, nullptr, true);
    if (f == 0) out.totals = pass.totals;
    out.grads.push_back(adjoint_gradient(ctx, controls, pass.states, pass.frames));
    out.hessians.push_back(forward_hessian(ctx, controls, pass.states, pass.frames));
  }
  return out;
}

PredictionGradients prediction_gradients(const TrajectoryProblem& problem,
                                         std::span<const ControlInput> controls) {
  const Ctx ctx = make_ctx(problem);
  PredictionGradients out;
  if (ctx.in->detection_mode) {
    for (const auto& [id, det] : ctx.in->detections) {
      (void)det;
      out.detections[id] = Vec2::Zero();
    }
  } else {
    for (const auto& [id, futures] : ctx.in->futures) {
      std::vector<std::vector<Vec2>> per_mode;
      for (const FutureMode& mode : futures.modes) {
        per_mode.emplace_back(mode.waypoints.size(), Vec2::Zero());
      }
      out.waypoints.emplace(id, std::move(per_mode));
    }
  }

  PredSink sink{&out, &ctx};
  const FramePass pass =
      run_frames(ctx, controls, problem.model->theta.weights, false, &sink, false);
  out.value = problem.model->theta.weights.dot(pass.totals);
  return out;
}

}  // namespace planeval::cost
