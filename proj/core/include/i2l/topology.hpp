#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace i2l {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// A point on the track: loop index plus arc position in [0, loop length).
struct TrackPos {
  int loop = 0;
  double arc = 0.0;

  friend bool operator==(const TrackPos&, const TrackPos&) = default;
};

// One side of a junction. side 0 is endpoint a, side 1 is endpoint b.
struct JunctionEnd {
  int junction = 0;
  int side = 0;

  JunctionEnd twin() const { return {junction, 1 - side}; }
  friend bool operator==(const JunctionEnd&, const JunctionEnd&) = default;
};

// Closed planar curve parametrised by arc fraction. Circles are stored
// analytically; anything else is a closed polyline.
class Embedding {
 public:
  enum class Kind { Circle, Polyline };

  static Embedding circle(Point2 center, double phase);
  static Embedding polyline(std::vector<Point2> vertices);

  Kind kind() const { return kind_; }
  const Point2& center() const { return center_; }
  double phase() const { return phase_; }
  const std::vector<Point2>& vertices() const { return vertices_; }

  // `arc` is in track units on a loop of `length`; the curve is traversed
  // proportionally so the loop length need not match the drawn perimeter.
  Point2 point_at(double arc, double length) const;
  // Direction of travel in radians.
  double heading_at(double arc, double length) const;
  // Perimeter of the drawn curve for a loop of `length`.
  double perimeter(double length) const;

 private:
  std::size_t segment_for(double fraction, double& local) const;

  Kind kind_ = Kind::Circle;
  Point2 center_{};
  double phase_ = 0.0;
  std::vector<Point2> vertices_;
  std::vector<double> cumulative_;  // polyline: cumulative length per vertex
};

struct Loop {
  double length = 0.0;
  Embedding embedding = Embedding::circle({}, 0.0);
};

struct Junction {
  TrackPos a;
  TrackPos b;
};

// A junction endpoint as seen from one loop, sorted by arc position.
struct LoopEndpoint {
  double arc = 0.0;
  JunctionEnd end;
};

// Immutable after construction; safe to share between threads.
class Topology {
 public:
  // Throws ConfigError if an invariant fails: arc positions out of range,
  // endpoints not coinciding in the plane, or a junction whose two endpoints
  // are the same track position.
  Topology(std::string name, std::vector<Loop> loops, std::vector<Junction> junctions);

  const std::string& name() const { return name_; }
  const std::vector<Loop>& loops() const { return loops_; }
  const std::vector<Junction>& junctions() const { return junctions_; }
  int loop_count() const { return static_cast<int>(loops_.size()); }
  double loop_length(int loop) const { return loops_.at(loop).length; }
  double max_loop_length() const { return max_length_; }
  double total_length() const;

  TrackPos endpoint(JunctionEnd e) const;
  const std::vector<LoopEndpoint>& endpoints_on(int loop) const { return by_loop_.at(loop); }

  Point2 point(TrackPos p) const;
  double heading(TrackPos p) const;

 private:
  std::string name_;
  std::vector<Loop> loops_;
  std::vector<Junction> junctions_;
  std::vector<std::vector<LoopEndpoint>> by_loop_;
  double max_length_ = 0.0;
};

// Forward arc distance from `from` to `to` on a loop of `length`, in [0, length).
double forward_distance(double from, double to, double length);

// Builds a topology from closed curves alone: every transversal crossing
// between two loops (or of a loop with itself) becomes a junction.
Topology topology_from_curves(std::string name, std::vector<Loop> loops);

// The five stock layouts, A (smallest) through E.
Topology preset_topology(char id);

nlohmann::json topology_to_json(const Topology& topology);
Topology topology_from_json(const nlohmann::json& j);

Topology load_topology(const std::filesystem::path& path);
void save_topology(const Topology& topology, const std::filesystem::path& path);

}  // namespace i2l
