#include <doctest.h>

#include "dpt/tensor.hpp"

using dpt::Shape;
using dpt::Tensor;

TEST_SUITE("tensor") {

TEST_CASE("construction and element access") {
  Tensor t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.extent(1) == 3);
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(t.flat(i) == 0.0);

  t.at(1, 2, 3) = 7.5;
  CHECK(t.flat(1 * 12 + 2 * 4 + 3) == 7.5);
  t.flat(0) = -1.0;
  CHECK(t.at(0, 0, 0) == -1.0);
}

TEST_CASE("bounds checking") {
  Tensor t({2, 3});
  CHECK_THROWS_AS(t.flat(6), dpt::ShapeError);
  CHECK_THROWS_AS(t.flat(-1), dpt::ShapeError);
  CHECK_THROWS_AS(t.at(2, 0), dpt::ShapeError);
  CHECK_THROWS_AS(t.at(0, 3), dpt::ShapeError);
  CHECK_THROWS_AS(t.at(0), dpt::ShapeError);        // wrong index count
  CHECK_THROWS_AS(t.extent(2), dpt::ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), dpt::ShapeError);  // non-positive extent
  CHECK_THROWS_AS(Tensor(Shape{}), dpt::ShapeError);
}

TEST_CASE("reshape preserves data, rejects bad element counts") {
  Tensor t({2, 6});
  for (int64_t i = 0; i < 12; ++i) t.flat(i) = static_cast<double>(i);
  Tensor r = t.reshaped({3, 4});
  CHECK(r.rank() == 2);
  CHECK(r.at(2, 3) == 11.0);
  CHECK_THROWS_AS(t.reshaped({5, 2}), dpt::ShapeError);
}

TEST_CASE("fill, full, same_shape") {
  Tensor t = Tensor::full({3, 2}, 4.25);
  CHECK(t.flat(5) == 4.25);
  t.fill(-0.5);
  CHECK(t.at(2, 1) == -0.5);
  CHECK(t.same_shape(Tensor({3, 2})));
  CHECK(!t.same_shape(Tensor({2, 3})));
}

TEST_CASE("data vector constructor validates length") {
  std::vector<double> v{1, 2, 3, 4, 5, 6};
  Tensor t({2, 3}, v);
  CHECK(t.at(1, 0) == 4.0);
  CHECK_THROWS_AS(Tensor({2, 2}, v), dpt::ShapeError);
}

TEST_CASE("shape_to_string") {
  CHECK(dpt::shape_to_string({2, 3, 4}) == "[2x3x4]");
  CHECK(dpt::shape_to_string({7}) == "[7]");
}

}  // TEST_SUITE
