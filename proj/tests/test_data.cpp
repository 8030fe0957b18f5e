#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mbnn/data.hpp"
#include "mbnn/errors.hpp"

using namespace mbnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  fs::path dir = fs::temp_directory_path() / "mbnn_test_data";
  fs::create_directories(dir);
  fs::path p = dir / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("polynomial generator") {
  auto pair = gen_polynomial(20, 1000, 7);
  CHECK(pair.train.size() == 20);
  CHECK(pair.test.size() == 1000);
  CHECK(pair.train.dim() == 1);
  // standardization uses the training rows only
  CHECK(std::abs(pair.train.x.col(0).mean()) < 1e-12);
  CHECK(std::abs(pair.train.y.mean()) < 1e-12);
  CHECK(std::abs(pair.test.y.mean()) > 1e-6);
  auto again = gen_polynomial(20, 1000, 7);
  CHECK(again.train.x == pair.train.x);
  CHECK(again.test.y == pair.test.y);
  CHECK(gen_polynomial(20, 10, 8).train.y != pair.train.y);

  Matrix x;
  Vector y;
  gen_polynomial_raw(1000000, 3, x, y);
  Eigen::ArrayXd eps = y.array() - x.col(0).array().cube();
  const double var = (eps - eps.mean()).square().mean();
  CHECK(var >= 8.9);
  CHECK(var <= 9.1);
  CHECK(x.minCoeff() >= -4.0);
  CHECK(x.maxCoeff() <= 4.0);
}

TEST_CASE("friedman generator") {
  auto pair = gen_friedman(50, 20, 7, 1.0, 4);
  CHECK(pair.train.dim() == 7);
  CHECK(pair.test.size() == 20);
  CHECK_THROWS_AS(gen_friedman(10, 10, 4, 1.0, 1), InvalidInput);
}

TEST_CASE("csv split and standardization") {
  std::string body = "a,b,target\n";
  for (int i = 0; i < 10; ++i)
    body += std::to_string(i) + ",3," + std::to_string(2 * i + 1) + "\n";
  auto path = temp_file("ten.csv", body);
  std::vector<std::string> warnings;
  SplitSpec spec;
  spec.seed = 5;
  auto pair = load_csv(path, "target", spec, &warnings);
  CHECK(pair.train.size() == 9);
  CHECK(pair.test.size() == 1);
  CHECK(pair.train.transform.x_scale[1] == 1.0);
  CHECK(warnings.size() == 1);
  CHECK(pair.train.x.col(1).cwiseAbs().maxCoeff() == 0.0);

  // the transform is a train-only refit
  Matrix raw_x = destandardize_inputs(pair.train.transform, pair.train.x);
  Vector raw_y = destandardize_targets(pair.train.transform, pair.train.y);
  auto refit = fit_standardization(raw_x, raw_y);
  CHECK((refit.x_mean - pair.train.transform.x_mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(refit.y_scale == doctest::Approx(pair.train.transform.y_scale).epsilon(1e-12));

  auto again = load_csv(path, "target", spec, nullptr);
  CHECK(again.test.y == pair.test.y);
  spec.repetition = 1;
  auto other = load_csv(path, "target", spec, nullptr);
  CHECK(other.train.transform.y_mean != pair.train.transform.y_mean);
}

TEST_CASE("standardization round trip") {
  Matrix x = Matrix::Random(30, 4) * 50.0;
  x.col(2).array() += 1e3;
  Vector y = Vector::Random(30) * 7.0;
  auto s = fit_standardization(x, y);
  Dataset d = standardize(s, x, y);
  CHECK((destandardize_inputs(s, d.x) - x).cwiseAbs().maxCoeff() < 1e-12 * 1e3);
  CHECK((destandardize_targets(s, d.y) - y).cwiseAbs().maxCoeff() < 1e-12 * 10);
}

TEST_CASE("ingestion errors name the row and column") {
  auto path = temp_file("bad.csv", "x,y\n1,2\n3,\n");
  try {
    read_numeric_csv(path);
    FAIL("expected an ingestion error");
  } catch (const IngestError& e) {
    std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'y'") != std::string::npos);
  }
  CHECK_THROWS_AS(read_numeric_csv(temp_file("nan.csv", "x,y\n1,nan\n")), IngestError);
  CHECK_THROWS_AS(read_numeric_csv("/nonexistent/file.csv"), IngestError);
  CHECK_THROWS_AS(load_csv(temp_file("ok.csv", "x,y\n1,2\n3,4\n"), "z", {}, nullptr), IngestError);
}

TEST_CASE("csv write and read back") {
  fs::path p = fs::temp_directory_path() / "mbnn_test_data" / "rt.csv";
  write_csv(p, {"u", "v"}, {{1.0 / 3.0, -2.5}, {1e-300, 4.0}});
  Table t = read_numeric_csv(p);
  CHECK(t.header == std::vector<std::string>{"u", "v"});
  CHECK(t.values(0, 0) == 1.0 / 3.0);
  CHECK(t.values(1, 0) == 1e-300);
}

TEST_CASE("time series") {
  auto ts = gen_bsts_series(50, 4, 2);
  CHECK(ts.y.size() == 50);
  CHECK(ts.x.cols() == 4);
  auto path = temp_file("ts.csv", "t,y,a,b\n1,0.5,1,2\n2,0.7,3,4\n3,0.1,5,6\n");
  auto loaded = load_time_series_csv(path, "t", "y");
  CHECK(loaded.x.cols() == 2);
  CHECK(loaded.x(2, 1) == 6.0);
  CHECK(loaded.y[1] == 0.7);
}
