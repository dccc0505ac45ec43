#include "i2l/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"

namespace i2l {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double arc, double length) {
  double r = std::fmod(arc, length);
  if (r < 0.0) r += length;
  // fmod of a value just below `length` can round up to it
  if (r >= length) r = 0.0;
  return r;
}

double distance(Point2 p, Point2 q) { return std::hypot(p.x - q.x, p.y - q.y); }

}  // namespace

double forward_distance(double from, double to, double length) {
  return wrap(to - from, length);
}

Embedding Embedding::circle(Point2 center, double phase) {
  Embedding e;
  e.kind_ = Kind::Circle;
  e.center_ = center;
  e.phase_ = phase;
  return e;
}

Embedding Embedding::polyline(std::vector<Point2> vertices) {
  if (vertices.size() < 3) throw ConfigError("polyline embedding needs at least 3 vertices");
  Embedding e;
  e.kind_ = Kind::Polyline;
  e.vertices_ = std::move(vertices);
  e.cumulative_.resize(e.vertices_.size() + 1, 0.0);
  for (std::size_t i = 0; i < e.vertices_.size(); ++i) {
    const Point2& p = e.vertices_[i];
    const Point2& q = e.vertices_[(i + 1) % e.vertices_.size()];
    e.cumulative_[i + 1] = e.cumulative_[i] + distance(p, q);
  }
  if (!(e.cumulative_.back() > 0.0)) throw ConfigError("polyline embedding has zero perimeter");
  return e;
}

std::size_t Embedding::segment_for(double fraction, double& local) const {
  const double target = fraction * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  std::size_t seg = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  seg = std::min(seg, vertices_.size() - 1);
  const double len = cumulative_[seg + 1] - cumulative_[seg];
  local = len > 0.0 ? (target - cumulative_[seg]) / len : 0.0;
  return seg;
}

Point2 Embedding::point_at(double arc, double length) const {
  const double fraction = wrap(arc, length) / length;
  if (kind_ == Kind::Circle) {
    const double radius = length / kTwoPi;
    const double theta = phase_ + kTwoPi * fraction;
    return {center_.x + radius * std::cos(theta), center_.y + radius * std::sin(theta)};
  }
  double t = 0.0;
  const std::size_t seg = segment_for(fraction, t);
  const Point2& p = vertices_[seg];
  const Point2& q = vertices_[(seg + 1) % vertices_.size()];
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

double Embedding::heading_at(double arc, double length) const {
  const double fraction = wrap(arc, length) / length;
  if (kind_ == Kind::Circle) return phase_ + kTwoPi * fraction + std::numbers::pi / 2.0;
  double t = 0.0;
  const std::size_t seg = segment_for(fraction, t);
  const Point2& p = vertices_[seg];
  const Point2& q = vertices_[(seg + 1) % vertices_.size()];
  return std::atan2(q.y - p.y, q.x - p.x);
}

double Embedding::perimeter(double length) const {
  return kind_ == Kind::Circle ? length : cumulative_.back();
}

Topology::Topology(std::string name, std::vector<Loop> loops, std::vector<Junction> junctions)
    : name_(std::move(name)), loops_(std::move(loops)), junctions_(std::move(junctions)) {
  if (loops_.empty()) throw ConfigError("topology '" + name_ + "' has no loops");
  for (std::size_t i = 0; i < loops_.size(); ++i) {
    const double len = loops_[i].length;
    if (!std::isfinite(len) || len <= 0.0)
      throw ConfigError("topology '" + name_ + "': loop " + std::to_string(i) + " has non-positive length");
    max_length_ = std::max(max_length_, len);
  }
  by_loop_.resize(loops_.size());
  const double tolerance = 1e-6 * std::max(1.0, max_length_);
  for (std::size_t j = 0; j < junctions_.size(); ++j) {
    const std::string where = "topology '" + name_ + "': junction " + std::to_string(j);
    for (const TrackPos* p : {&junctions_[j].a, &junctions_[j].b}) {
      if (p->loop < 0 || p->loop >= loop_count()) throw ConfigError(where + " references a missing loop");
      if (!(p->arc >= 0.0 && p->arc < loops_[p->loop].length))
        throw ConfigError(where + " has an arc position outside [0, loop length)");
    }
    if (junctions_[j].a == junctions_[j].b) throw ConfigError(where + " joins a position to itself");
    if (distance(point(junctions_[j].a), point(junctions_[j].b)) > tolerance)
      throw ConfigError(where + " endpoints do not coincide in the plane");
    by_loop_[junctions_[j].a.loop].push_back({junctions_[j].a.arc, {static_cast<int>(j), 0}});
    by_loop_[junctions_[j].b.loop].push_back({junctions_[j].b.arc, {static_cast<int>(j), 1}});
  }
  for (auto& list : by_loop_) {
    std::sort(list.begin(), list.end(), [](const LoopEndpoint& x, const LoopEndpoint& y) {
      if (x.arc != y.arc) return x.arc < y.arc;
      if (x.end.junction != y.end.junction) return x.end.junction < y.end.junction;
      return x.end.side < y.end.side;
    });
  }
}

double Topology::total_length() const {
  double total = 0.0;
  for (const Loop& l : loops_) total += l.length;
  return total;
}

TrackPos Topology::endpoint(JunctionEnd e) const {
  const Junction& j = junctions_.at(e.junction);
  return e.side == 0 ? j.a : j.b;
}

Point2 Topology::point(TrackPos p) const {
  const Loop& l = loops_.at(p.loop);
  return l.embedding.point_at(p.arc, l.length);
}

double Topology::heading(TrackPos p) const {
  const Loop& l = loops_.at(p.loop);
  return l.embedding.heading_at(p.arc, l.length);
}

// ---------------------------------------------------------------------------
// Crossing detection for polyline layouts.

namespace {

struct Crossing {
  double fraction_a;
  double fraction_b;
};

double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }

std::vector<Crossing> crossings(const Embedding& ea, const Embedding& eb, bool same) {
  std::vector<Crossing> out;
  const auto& va = ea.vertices();
  const auto& vb = eb.vertices();
  const double pa = ea.perimeter(1.0);
  const double pb = eb.perimeter(1.0);
  std::vector<double> ca(va.size() + 1, 0.0), cb(vb.size() + 1, 0.0);
  for (std::size_t i = 0; i < va.size(); ++i)
    ca[i + 1] = ca[i] + distance(va[i], va[(i + 1) % va.size()]);
  for (std::size_t i = 0; i < vb.size(); ++i)
    cb[i + 1] = cb[i] + distance(vb[i], vb[(i + 1) % vb.size()]);

  for (std::size_t i = 0; i < va.size(); ++i) {
    const Point2 p = va[i];
    const Point2 r{va[(i + 1) % va.size()].x - p.x, va[(i + 1) % va.size()].y - p.y};
    for (std::size_t k = same ? i + 2 : 0; k < vb.size(); ++k) {
      if (same && i == 0 && k == vb.size() - 1) continue;  // adjacent across the seam
      const Point2 q = vb[k];
      const Point2 s{vb[(k + 1) % vb.size()].x - q.x, vb[(k + 1) % vb.size()].y - q.y};
      const double denom = cross(r, s);
      if (std::abs(denom) < 1e-14) continue;
      const Point2 qp{q.x - p.x, q.y - p.y};
      const double t = cross(qp, s) / denom;
      const double u = cross(qp, r) / denom;
      if (t < 0.0 || t >= 1.0 || u < 0.0 || u >= 1.0) continue;
      const double la = ca[i + 1] - ca[i];
      const double lb = cb[k + 1] - cb[k];
      out.push_back({(ca[i] + t * la) / pa, (cb[k] + u * lb) / pb});
    }
  }
  return out;
}

}  // namespace

Topology topology_from_curves(std::string name, std::vector<Loop> loops) {
  for (const Loop& l : loops)
    if (l.embedding.kind() != Embedding::Kind::Polyline)
      throw ConfigError("junction detection needs polyline embeddings");
  std::vector<Junction> junctions;
  for (std::size_t i = 0; i < loops.size(); ++i) {
    for (std::size_t k = i; k < loops.size(); ++k) {
      for (const Crossing& c : crossings(loops[i].embedding, loops[k].embedding, i == k)) {
        TrackPos a{static_cast<int>(i), wrap(c.fraction_a * loops[i].length, loops[i].length)};
        TrackPos b{static_cast<int>(k), wrap(c.fraction_b * loops[k].length, loops[k].length)};
        if (i == k && b.arc < a.arc) std::swap(a, b);
        junctions.push_back({a, b});
      }
    }
  }
  std::sort(junctions.begin(), junctions.end(), [](const Junction& x, const Junction& y) {
    if (x.a.loop != y.a.loop) return x.a.loop < y.a.loop;
    if (x.b.loop != y.b.loop) return x.b.loop < y.b.loop;
    return x.a.arc < y.a.arc;
  });
  return Topology(std::move(name), std::move(loops), std::move(junctions));
}

namespace {

// Regular n-gon whose perimeter equals `length`.
Embedding ring(Point2 center, double length, double phase = 0.0, int n = 360) {
  const double radius = length / (2.0 * n * std::sin(std::numbers::pi / n));
  std::vector<Point2> v;
  v.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double theta = phase + kTwoPi * (k + 0.5) / n;
    v.push_back({center.x + radius * std::cos(theta), center.y + radius * std::sin(theta)});
  }
  return Embedding::polyline(std::move(v));
}

// Lemniscate of Gerono scaled so its polyline perimeter equals `length`.
// It crosses itself once, at `center`.
Embedding figure_eight(Point2 center, double length, int n = 480) {
  std::vector<Point2> unit;
  unit.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = kTwoPi * (k + 0.5) / n;
    unit.push_back({std::sin(t), std::sin(t) * std::cos(t)});
  }
  double perimeter = 0.0;
  for (int k = 0; k < n; ++k) perimeter += distance(unit[k], unit[(k + 1) % n]);
  const double scale = length / perimeter;
  for (Point2& p : unit) p = {center.x + scale * p.x, center.y + scale * p.y};
  return Embedding::polyline(std::move(unit));
}

}  // namespace

Topology preset_topology(char id) {
  switch (id) {
    case 'A':
      return topology_from_curves("A", {{60.0, ring({0.0, 0.0}, 60.0)}, {60.0, ring({12.0, 0.0}, 60.0)}});
    case 'B':
      return topology_from_curves(
          "B", {{80.0, ring({24.0, 0.0}, 80.0)}, {100.0, figure_eight({0.0, 0.0}, 100.0)}});
    case 'C':
      return topology_from_curves("C", {{80.0, ring({0.0, 0.0}, 80.0)},
                                        {100.0, ring({22.0, 0.0}, 100.0)},
                                        {80.0, ring({44.0, 0.0}, 80.0)}});
    case 'D':
      return topology_from_curves("D", {{108.0, ring({0.0, 0.0}, 108.0)},
                                        {132.0, ring({36.0, 0.0}, 132.0)},
                                        {112.0, ring({36.0, 36.0}, 112.0)},
                                        {128.0, ring({0.0, 36.0}, 128.0)}});
    case 'E': {
      const double side = 14.0;
      const double h = side * std::sqrt(3.0) / 2.0;
      return topology_from_curves("E", {{90.0, ring({0.0, 0.0}, 90.0)},
                                        {90.0, ring({side, 0.0}, 90.0)},
                                        {90.0, ring({side / 2.0, h}, 90.0)}});
    }
    default:
      throw ConfigError(std::string("unknown topology preset '") + id + "'");
  }
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json topology_to_json(const Topology& topology) {
  nlohmann::json loops = nlohmann::json::array();
  for (const Loop& l : topology.loops()) {
    nlohmann::json emb;
    if (l.embedding.kind() == Embedding::Kind::Circle) {
      emb = {{"kind", "circle"},
             {"center", {l.embedding.center().x, l.embedding.center().y}},
             {"phase", l.embedding.phase()}};
    } else {
      nlohmann::json pts = nlohmann::json::array();
      for (const Point2& p : l.embedding.vertices()) pts.push_back({p.x, p.y});
      emb = {{"kind", "polyline"}, {"points", std::move(pts)}};
    }
    loops.push_back({{"length", l.length}, {"embedding", std::move(emb)}});
  }
  nlohmann::json junctions = nlohmann::json::array();
  for (const Junction& j : topology.junctions()) {
    junctions.push_back({{"a", {{"loop", j.a.loop}, {"arc", j.a.arc}}},
                         {"b", {{"loop", j.b.loop}, {"arc", j.b.arc}}}});
  }
  return {{"name", topology.name()}, {"loops", std::move(loops)}, {"junctions", std::move(junctions)}};
}

Topology topology_from_json(const nlohmann::json& j) {
  try {
    std::vector<Loop> loops;
    for (const auto& lj : j.at("loops")) {
      Loop l;
      l.length = lj.at("length").get<double>();
      const auto& ej = lj.at("embedding");
      const std::string kind = ej.at("kind").get<std::string>();
      if (kind == "circle") {
        const auto& c = ej.at("center");
        l.embedding = Embedding::circle({c.at(0).get<double>(), c.at(1).get<double>()},
                                        ej.value("phase", 0.0));
      } else if (kind == "polyline") {
        std::vector<Point2> pts;
        for (const auto& p : ej.at("points")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        l.embedding = Embedding::polyline(std::move(pts));
      } else {
        throw ConfigError("unknown embedding kind '" + kind + "'");
      }
      loops.push_back(std::move(l));
    }
    std::vector<Junction> junctions;
    for (const auto& jj : j.at("junctions")) {
      auto pos = [](const nlohmann::json& p) {
        return TrackPos{p.at("loop").get<int>(), p.at("arc").get<double>()};
      };
      junctions.push_back({pos(jj.at("a")), pos(jj.at("b"))});
    }
    return Topology(j.value("name", std::string("unnamed")), std::move(loops), std::move(junctions));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed topology: ") + e.what());
  }
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open topology file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("topology file " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return topology_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_topology(const Topology& topology, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write topology file " + path.string());
  out << topology_to_json(topology).dump(1) << '\n';
}

}  // namespace i2l
