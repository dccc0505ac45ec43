#include "i2l/features.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"

namespace i2l {

std::string_view sort_name(Sort s) {
  switch (s) {
    case Sort::Vehicle: return "Vehicle";
    case Sort::Junction: return "Junction";
    case Sort::Position: return "Position";
    case Sort::Speed: return "Speed";
    case Sort::Separation: return "Separation";
    case Sort::Delta: return "Delta";
  }
  return "?";
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Ego: return "ego";
    case Op::Pos: return "pos";
    case Op::Speed: return "speed";
    case Op::Fj: return "fj";
    case Op::Fa: return "fa";
    case Op::Ba: return "ba";
    case Op::Twin: return "twin";
    case Op::Sep: return "sep";
    case Op::Sub: return "sub";
  }
  return "?";
}

const std::vector<OperationSig>& operation_signatures() {
  static const std::vector<OperationSig> sigs = {
      {Op::Pos, {Sort::Vehicle}, Sort::Position},
      {Op::Pos, {Sort::Junction}, Sort::Position},
      {Op::Speed, {Sort::Vehicle}, Sort::Speed},
      {Op::Fj, {Sort::Vehicle}, Sort::Junction},
      {Op::Fa, {Sort::Vehicle}, Sort::Vehicle},
      {Op::Fa, {Sort::Junction}, Sort::Vehicle},
      {Op::Ba, {Sort::Vehicle}, Sort::Vehicle},
      {Op::Ba, {Sort::Junction}, Sort::Vehicle},
      {Op::Twin, {Sort::Junction}, Sort::Junction},
      {Op::Sep, {Sort::Position, Sort::Position}, Sort::Separation},
      {Op::Sub, {Sort::Speed, Sort::Speed}, Sort::Delta},
      {Op::Sub, {Sort::Separation, Sort::Separation}, Sort::Delta},
  };
  return sigs;
}

TermPtr ego_term() {
  static const TermPtr ego = [] {
    auto t = std::shared_ptr<Term>(new Term());
    t->op_ = Op::Ego;
    t->sort_ = Sort::Vehicle;
    t->depth_ = 0;
    t->canonical_ = "ego";
    return TermPtr(t);
  }();
  return ego;
}

TermPtr make_term(Op op, std::vector<TermPtr> args) {
  if (op == Op::Ego) {
    if (!args.empty()) throw InputError("ego takes no arguments");
    return ego_term();
  }
  const OperationSig* match = nullptr;
  for (const OperationSig& sig : operation_signatures()) {
    if (sig.op != op || sig.inputs.size() != args.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < args.size(); ++i) ok = ok && args[i] && args[i]->sort() == sig.inputs[i];
    if (ok) {
      match = &sig;
      break;
    }
  }
  if (match == nullptr) {
    std::string msg = "no signature " + std::string(op_name(op)) + "(";
    for (std::size_t i = 0; i < args.size(); ++i)
      msg += (i ? "," : "") + std::string(args[i] ? sort_name(args[i]->sort()) : "null");
    throw InputError(msg + ")");
  }
  auto t = std::shared_ptr<Term>(new Term());
  t->op_ = op;
  t->sort_ = match->output;
  t->canonical_ = std::string(op_name(op)) + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    t->depth_ = std::max(t->depth_, args[i]->depth() + 1);
    if (i) t->canonical_ += ',';
    t->canonical_ += args[i]->canonical();
  }
  t->canonical_ += ')';
  t->args_ = std::move(args);
  return t;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  TermPtr parse() {
    TermPtr t = term();
    if (i_ != s_.size()) fail("trailing characters");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InputError("cannot parse term '" + std::string(s_) + "' at " + std::to_string(i_) + ": " + what);
  }

  TermPtr term() {
    const std::size_t start = i_;
    while (i_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_]))) ++i_;
    const std::string_view name = s_.substr(start, i_ - start);
    if (name.empty()) fail("expected an operation name");
    if (name == "ego") return ego_term();
    static const std::pair<std::string_view, Op> ops[] = {
        {"pos", Op::Pos}, {"speed", Op::Speed}, {"fj", Op::Fj},   {"fa", Op::Fa},
        {"ba", Op::Ba},   {"twin", Op::Twin},   {"sep", Op::Sep}, {"sub", Op::Sub}};
    auto it = std::find_if(std::begin(ops), std::end(ops), [&](const auto& p) { return p.first == name; });
    if (it == std::end(ops)) fail("unknown operation '" + std::string(name) + "'");
    expect('(');
    std::vector<TermPtr> args;
    args.push_back(term());
    while (i_ < s_.size() && s_[i_] == ',') {
      ++i_;
      args.push_back(term());
    }
    expect(')');
    return make_term(it->second, std::move(args));
  }

  void expect(char c) {
    if (i_ >= s_.size() || s_[i_] != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

// Evaluated value of a term for one (state, ego).
struct Value {
  enum class Kind : std::uint8_t { None, Vehicle, Junction, Position, Scalar };
  Kind kind = Kind::None;
  int id = 0;  // vehicle index, junction index, or loop index
  int side = 0;
  double x = 0.0;  // arc position or scalar
};

struct Context {
  const MarkovState& state;
  const Topology& topology;
  int ego;
  double ego_loop_length;
};

Value apply(Op op, Sort out_sort, const Value& a, const Value& b, const Context& ctx) {
  using K = Value::Kind;
  switch (op) {
    case Op::Ego:
      return {K::Vehicle, ctx.ego};
    case Op::Pos:
      if (a.kind == K::Vehicle) {
        const VehicleState& v = ctx.state.vehicles[a.id];
        return {K::Position, v.loop, 0, v.position};
      }
      if (a.kind == K::Junction) {
        const TrackPos p = ctx.topology.endpoint({a.id, a.side});
        return {K::Position, p.loop, 0, p.arc};
      }
      return {};
    case Op::Speed:
      return {K::Scalar, 0, 0, a.kind == K::Vehicle ? ctx.state.vehicles[a.id].speed : 0.0};
    case Op::Fj: {
      if (a.kind != K::Vehicle) return {};
      auto j = next_junction_ahead(ctx.state, ctx.topology, a.id);
      if (!j) return {};
      return {K::Junction, j->junction, j->side};
    }
    case Op::Fa:
    case Op::Ba: {
      Anchor anchor;
      if (a.kind == K::Vehicle)
        anchor = a.id;
      else if (a.kind == K::Junction)
        anchor = JunctionEnd{a.id, a.side};
      else
        return {};
      auto v = op == Op::Fa ? next_vehicle_ahead(ctx.state, ctx.topology, anchor)
                            : next_vehicle_behind(ctx.state, ctx.topology, anchor);
      if (!v) return {};
      return {K::Vehicle, *v};
    }
    case Op::Twin:
      if (a.kind != K::Junction) return {};
      return {K::Junction, a.id, 1 - a.side};
    case Op::Sep:
      if (a.kind == K::Position && b.kind == K::Position && a.id == b.id)
        return {K::Scalar, 0, 0, forward_distance(b.x, a.x, ctx.topology.loop_length(a.id))};
      return {K::Scalar, 0, 0, ctx.ego_loop_length};
    case Op::Sub:
      return {K::Scalar, 0, 0, a.x - b.x};
  }
  (void)out_sort;
  return {};
}

Value eval_term(const Term& t, const Context& ctx) {
  Value a, b;
  if (!t.args().empty()) a = eval_term(*t.args()[0], ctx);
  if (t.args().size() > 1) b = eval_term(*t.args()[1], ctx);
  return apply(t.op(), t.sort(), a, b, ctx);
}

}  // namespace

TermPtr parse_term(std::string_view text) { return Parser(text).parse(); }

FeatureExpr::FeatureExpr(TermPtr root) : root_(std::move(root)) {
  if (!root_ || !is_scalar(root_->sort()))
    throw InputError("a feature must have Speed, Separation or Delta sort");
}

FeatureExpr FeatureExpr::parse(std::string_view text) { return FeatureExpr(parse_term(text)); }

std::vector<std::string> FeatureSet::names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const FeatureExpr& f : features) out.push_back(f.canonical());
  return out;
}

int FeatureSet::index_of(std::string_view canonical) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].canonical() == canonical) return static_cast<int>(i);
  return -1;
}

void FeatureSet::validate() const {
  std::vector<std::string> n = names();
  std::sort(n.begin(), n.end());
  if (std::adjacent_find(n.begin(), n.end()) != n.end()) throw InputError("duplicate feature in feature set");
}

FeatureSet enumerate_features(int r) {
  if (r < 1) throw InputError("recursion depth must be at least 1");
  // entities[d]: vehicle and junction terms of depth exactly d
  std::vector<std::vector<TermPtr>> entities(r + 1);
  entities[0].push_back(ego_term());
  std::vector<TermPtr> scalars;

  // separations and speeds of depth <= r - 1, by sort, for the difference rule
  std::vector<TermPtr> speeds_lt, seps_lt;
  std::vector<TermPtr> anchored_speed, anchored_sep;

  auto by_depth = [](const TermPtr& x, const TermPtr& y) {
    return x->depth() != y->depth() ? x->depth() < y->depth() : x->canonical() < y->canonical();
  };

  for (int d = 1; d <= r; ++d) {
    std::vector<TermPtr> level_scalars;
    for (const TermPtr& x : entities[d - 1]) {
      if (x->sort() == Sort::Vehicle) {
        entities[d].push_back(make_term(Op::Fa, {x}));
        entities[d].push_back(make_term(Op::Ba, {x}));
        entities[d].push_back(make_term(Op::Fj, {x}));
        level_scalars.push_back(make_term(Op::Speed, {x}));
      } else {
        entities[d].push_back(make_term(Op::Fa, {x}));
        entities[d].push_back(make_term(Op::Ba, {x}));
        entities[d].push_back(make_term(Op::Twin, {x}));
      }
    }
    if (d >= 3) {
      // sep between an entity of depth d-2 and the entity it was derived from
      for (const TermPtr& derived : entities[d - 2]) {
        const TermPtr& base = derived->args().front();
        TermPtr pd = make_term(Op::Pos, {derived});
        TermPtr pb = make_term(Op::Pos, {base});
        level_scalars.push_back(make_term(Op::Sep, {pd, pb}));
        level_scalars.push_back(make_term(Op::Sep, {pb, pd}));
      }
    }
    if (d >= 2) {
      // sub(X, Y) with max(depth X, depth Y) = d - 1
      for (const auto& [anchors, pool] :
           {std::pair{&anchored_speed, &speeds_lt}, std::pair{&anchored_sep, &seps_lt}}) {
        for (const TermPtr& x : *anchors)
          for (const TermPtr& y : *pool)
            if (std::max(x->depth(), y->depth()) == d - 1) level_scalars.push_back(make_term(Op::Sub, {x, y}));
      }
    }
    for (const TermPtr& s : level_scalars) {
      if (s->sort() == Sort::Speed) {
        speeds_lt.push_back(s);
        if (s->args()[0]->op() == Op::Ego) anchored_speed.push_back(s);
      } else if (s->sort() == Sort::Separation) {
        seps_lt.push_back(s);
        const bool touches_ego = s->args()[0]->args()[0]->op() == Op::Ego || s->args()[1]->args()[0]->op() == Op::Ego;
        if (touches_ego) anchored_sep.push_back(s);
      }
    }
    scalars.insert(scalars.end(), level_scalars.begin(), level_scalars.end());
  }

  std::sort(scalars.begin(), scalars.end(), by_depth);
  scalars.erase(std::unique(scalars.begin(), scalars.end(),
                            [](const TermPtr& x, const TermPtr& y) { return x->canonical() == y->canonical(); }),
                scalars.end());
  FeatureSet out;
  out.depth = r;
  out.features.reserve(scalars.size());
  for (TermPtr& t : scalars) out.features.emplace_back(std::move(t));
  return out;
}

double eval_feature(const FeatureExpr& expr, const MarkovState& state, const Topology& topology, int ego) {
  if (ego < 0 || ego >= state.vehicle_count()) throw InputError("ego index out of range");
  const Context ctx{state, topology, ego, topology.loop_length(state.vehicles[ego].loop)};
  return eval_term(expr.term(), ctx).x;
}

FeatureProgram::FeatureProgram(const FeatureSet& features) {
  std::unordered_map<std::string, int> index;
  auto visit = [&](auto&& self, const Term& t) -> int {
    auto it = index.find(t.canonical());
    if (it != index.end()) return it->second;
    Node n{t.op(), t.sort()};
    if (!t.args().empty()) n.a = self(self, *t.args()[0]);
    if (t.args().size() > 1) n.b = self(self, *t.args()[1]);
    nodes_.push_back(n);
    const int id = static_cast<int>(nodes_.size()) - 1;
    index.emplace(t.canonical(), id);
    return id;
  };
  outputs_.reserve(features.size());
  for (const FeatureExpr& f : features.features) outputs_.push_back(visit(visit, f.term()));
}

void FeatureProgram::evaluate(const MarkovState& state, const Topology& topology, int ego,
                              std::span<double> out) const {
  if (out.size() != outputs_.size()) throw InputError("output span does not match the feature count");
  if (ego < 0 || ego >= state.vehicle_count()) throw InputError("ego index out of range");
  thread_local std::vector<Value> values;
  values.resize(nodes_.size());
  const Context ctx{state, topology, ego, topology.loop_length(state.vehicles[ego].loop)};
  static const Value none{};
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    values[i] = apply(n.op, n.sort, n.a >= 0 ? values[n.a] : none, n.b >= 0 ? values[n.b] : none, ctx);
  }
  for (std::size_t i = 0; i < outputs_.size(); ++i) out[i] = values[outputs_[i]].x;
}

Dataset evaluate_matrix(const FeatureSet& features, const EpisodeHistory& history, const Topology& topology,
                        int episode, int topology_index) {
  if (features.size() == 0) throw InputError("feature set is empty");
  const FeatureProgram program(features);
  Dataset data(features.names());
  std::vector<double> row(features.size());
  for (const StepRecord& rec : history.records) {
    if (rec.actions.empty()) continue;
    for (int v = 0; v < rec.state.vehicle_count(); ++v) {
      program.evaluate(rec.state, topology, v, row);
      data.append(row, rec.actions[v], episode, topology_index);
    }
  }
  return data;
}

std::string feature_set_to_json(const FeatureSet& features) {
  nlohmann::json j = features.names();
  return j.dump(1);
}

FeatureSet feature_set_from_json(std::string_view text) {
  FeatureSet out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& s : j) {
      out.features.push_back(FeatureExpr::parse(s.get<std::string>()));
      out.depth = std::max(out.depth, out.features.back().depth());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed feature set JSON: ") + e.what());
  }
  out.validate();
  return out;
}

}  // namespace i2l
