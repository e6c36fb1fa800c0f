#include <doctest.h>

#include <numbers>
#include <random>

#include "markersfm/errors.hpp"
#include "markersfm/sensor_model.hpp"
#include "oracles.hpp"

using namespace markersfm;

namespace {

const Intrinsics kK{800, 800, 612, 512, 1224, 1024};

}  // namespace

TEST_CASE("intrinsics validity and field of view")
{
  CHECK(kK.valid());
  CHECK_FALSE(Intrinsics{0, 800, 612, 512, 1224, 1024}.valid());
  CHECK_FALSE(Intrinsics{800, 800, 1300, 512, 1224, 1024}.valid());

  const double hfov = 39.56 * std::numbers::pi / 180.0;
  const Intrinsics k = Intrinsics::from_hfov(1224, 1024, hfov);
  CHECK(2.0 * std::atan(k.cx / k.fx) == doctest::Approx(hfov).epsilon(1e-12));
  CHECK(k.fx == k.fy);
  CHECK(k.cy == 512.0);
}

TEST_CASE("project")
{
  CHECK((project(kK, Vec3(0, 0, 2)) - Vec2(612, 512)).norm() == 0.0);
  CHECK((project(kK, Vec3(0.2, -0.1, 2)) - Vec2(692, 472)).norm() < 1e-12);
  CHECK_THROWS_AS(project(kK, Vec3(0, 0, -1)), BehindCameraError);
  CHECK_THROWS_AS(project(kK, Vec3(0, 0, kMinDepth)), BehindCameraError);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1), z(0.2, 30);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x(u(rng), u(rng), z(rng));
    const double s = 0.1 + 10 * (u(rng) + 1);
    CHECK((project(kK, s * x) - project(kK, x)).norm() < 1e-9);
  }
}

TEST_CASE("projection_jacobian against central differences")
{
  Mat23 axis;
  axis << 400, 0, 0, 0, 400, 0;
  CHECK((projection_jacobian(kK, Vec3(0, 0, 2)) - axis).norm() < 1e-12);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3), z(0.2, 30), lam(0.5, 4);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 x(u(rng), u(rng), z(rng));
    const Mat23 j = projection_jacobian(kK, x);
    Mat23 fd;
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e(c) = h * std::max(1.0, std::abs(x(c)));
      fd.col(c) = (project(kK, x + e) - project(kK, x - e)) / (2 * e(c));
    }
    worst = std::max(worst, (fd - j).norm() / j.norm());

    const double l = lam(rng);
    CHECK((projection_jacobian(kK, l * x) - j / l).norm() < 1e-9 * j.norm());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("normalize_pixel inverts projection")
{
  const Vec3 x(0.3, -0.2, 1.7);
  CHECK((normalize_pixel(kK, project(kK, x)) - Vec2(x.x() / x.z(), x.y() / x.z())).norm() < 1e-14);
}

TEST_CASE("in_frustum")
{
  CHECK(in_frustum(kK, Vec3(0, 0, 2), 0));
  CHECK_FALSE(in_frustum(kK, Vec3(0, 0, -2), 0));
  // Back-project pixels just outside and inside the right edge.
  const double z = 3.0;
  const auto back = [&](double u, double v) {
    return Vec3((u - kK.cx) / kK.fx * z, (v - kK.cy) / kK.fy * z, z);
  };
  CHECK_FALSE(in_frustum(kK, back(kK.width + 5, kK.cy), 0));
  CHECK(in_frustum(kK, back(kK.width - 3, kK.cy), 2));
  CHECK_FALSE(in_frustum(kK, back(kK.width - 1, kK.cy), 2));
}

TEST_CASE("camera_from_group")
{
  CameraRig rig;
  rig.cameras.push_back({kK, Pose::identity()});
  Pose shifted;
  shifted.translation = Vec3(0.1, -0.2, 0.3);
  rig.cameras.push_back({kK, shifted});
  std::mt19937_64 rng(3);
  rig.cameras.push_back({kK, oracle::random_pose(rng)});

  CHECK(camera_from_group(rig, 0).matrix() == Mat4::Identity());
  const Pose c1 = camera_from_group(rig, 1);
  CHECK(c1.rotation == Mat3::Identity());
  CHECK((c1.translation + shifted.translation).norm() == 0.0);
  CHECK((compose(camera_from_group(rig, 2), rig.cameras[2].group_from_camera).matrix() -
         Mat4::Identity())
            .norm() < 1e-12);
  CHECK_THROWS_AS(camera_from_group(rig, 3), std::out_of_range);
}
