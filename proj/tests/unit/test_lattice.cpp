#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <utility>

#include "mrfseg/errors.hpp"
#include "mrfseg/lattice.hpp"
#include "mrfseg/mvol.hpp"
#include "mrfseg/random.hpp"

using namespace mrfseg;

TEST_CASE("linear index is x-fastest") {
  const Dims d444{4, 4, 4, 1};
  CHECK(linear_index({0, 0, 0}, d444) == 0);
  CHECK(linear_index({1, 0, 0}, d444) == 1);
  CHECK(linear_index({1, 2, 3}, Dims{4, 5, 6, 1}) == 1 + 2 * 4 + 3 * 20);
  CHECK_THROWS_AS(linear_index({4, 0, 0}, d444), BoundsError);

  const Dims d{3, 5, 2, 1};
  for (std::size_t i = 0; i < d.voxel_count(); ++i) CHECK(linear_index(coords_of(i, d), d) == i);
}

TEST_CASE("first-order neighborhood") {
  const Dims d{4, 4, 4, 1};
  CHECK(first_order_neighbors(linear_index({1, 2, 1}, d), d).size() == 6);
  CHECK(first_order_neighbors(0, d).size() == 3);
  CHECK(first_order_neighbors(0, Dims{1, 1, 1, 1}).size() == 0);

  // symmetric, no self loops, unique
  const Dims e{3, 4, 2, 1};
  std::set<std::pair<std::size_t, std::size_t>> links;
  for (std::size_t i = 0; i < e.voxel_count(); ++i) {
    const auto nb = first_order_neighbors(i, e);
    std::set<std::size_t> uniq(nb.begin(), nb.end());
    CHECK(uniq.size() == nb.size());
    for (std::size_t j : nb) {
      CHECK(j != i);
      links.insert({i, j});
    }
  }
  for (const auto& [i, j] : links) CHECK(links.count({j, i}) == 1);

  std::size_t edges = 0;
  for_each_edge(e, [&](std::size_t i, std::size_t j) {
    CHECK(i < j);
    ++edges;
  });
  CHECK(edges * 2 == links.size());
  // 2*4*2 x-edges, 3*3*2 y-edges, 3*4*1 z-edges
  CHECK(edges == 16 + 18 + 12);
}

TEST_CASE("dims validation") {
  CHECK_THROWS_AS(Dims({0, 4, 4, 1}).validate(), FormatError);
  CHECK_THROWS_AS(Dims({4, 4, 4, 3}).validate(), FormatError);
  CHECK_NOTHROW(Dims({1, 1, 1, 2}).validate());
}

TEST_CASE("tissue names round trip") {
  for (Tissue t : {Tissue::bg, Tissue::wm, Tissue::gm, Tissue::csf, Tissue::sb,
                   Tissue::unclassified}) {
    CHECK(parse_tissue(tissue_name(t)) == t);
  }
  CHECK_FALSE(parse_tissue("bone").has_value());
  CHECK(is_valid_label_code(255));
  CHECK_FALSE(is_valid_label_code(7));
}

TEST_CASE("counter rng streams are keyed, not ordered") {
  CounterRng a(7, 1, 2);
  CounterRng b(7, 1, 2);
  CounterRng c(7, 1, 3);
  const auto a1 = a();
  CHECK(a1 == b());
  CHECK(a1 != c());
  double sum = 0.0;
  double sq = 0.0;
  CounterRng r(99, 0);
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

namespace {

Volume ramp_volume(int channels) {
  Volume v(Dims{3, 2, 2, channels});
  for (std::size_t k = 0; k < v.data.size(); ++k) v.data[k] = 0.25 * static_cast<double>(k) - 1.0;
  v.voxel_mm = {0.9, 1.0, 3.0};
  return v;
}

}  // namespace

TEST_CASE("mvol volume round trip is bit exact for f32 values") {
  for (int ch : {1, 2}) {
    const Volume v = ramp_volume(ch);
    std::stringstream s;
    write_volume(s, v);
    const Volume back = read_volume(s);
    CHECK(back.dims.nx == 3);
    CHECK(back.dims.channels == ch);
    CHECK(back.data == v.data);
    CHECK(back.voxel_mm == v.voxel_mm);

    std::stringstream again;
    write_volume(again, back);
    std::stringstream first;
    write_volume(first, v);
    CHECK(again.str() == first.str());
  }
}

TEST_CASE("mvol labels and bias round trip") {
  LabelMap l(Dims{2, 2, 2, 1});
  l[1] = Tissue::wm;
  l[2] = Tissue::gm;
  l[3] = Tissue::csf;
  l[4] = Tissue::sb;
  l[5] = Tissue::unclassified;
  std::stringstream s;
  write_labels(s, l);
  CHECK(read_labels(s) == l);

  BiasField b(Dims{2, 1, 1, 2});
  b.values = {0.5, -0.25, 0.125, 0.0};
  std::stringstream t;
  write_bias(t, b);
  CHECK(read_bias(t).values == b.values);
}

TEST_CASE("mvol rejects malformed input") {
  std::stringstream bad_magic("MVOL2\n{}\n");
  CHECK_THROWS_AS(read_volume(bad_magic), FormatError);

  std::stringstream s;
  write_volume(s, ramp_volume(1));
  std::string full = s.str();
  std::stringstream truncated(full.substr(0, full.size() - 3));
  CHECK_THROWS_AS(read_volume(truncated), FormatError);
  std::stringstream trailing(full + "x");
  CHECK_THROWS_AS(read_volume(trailing), FormatError);

  LabelMap l(Dims{2, 1, 1, 1});
  std::stringstream ls;
  write_labels(ls, l);
  std::string lab = ls.str();
  lab.back() = 9;
  std::stringstream badcode(lab);
  CHECK_THROWS_AS(read_labels(badcode), FormatError);

  // a label file is not an intensity volume
  std::stringstream as_volume(ls.str());
  CHECK_THROWS_AS(read_volume(as_volume), FormatError);
}
