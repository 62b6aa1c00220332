// Walkthrough of the grasp geometry primitives: the 5-D rectangle, the angle
// codec, rotated-rectangle IoU and the match predicate.
#include <cstdio>

#include "semgrasp/geometry.hpp"

using namespace semgrasp;

int main() {
  const GraspRect gt{240.0, 200.0, 35.0, 80.0, 30.0};
  GraspRect pred = gt;
  pred.x += 6.0;
  pred.theta = wrap_angle_deg(pred.theta - 12.0);

  std::printf("ground truth: center (%.0f, %.0f), theta %.0f deg, %g x %g px\n", gt.x,
              gt.y, gt.theta, gt.w, gt.h);
  std::printf("angle class:  %d (decodes to %.0f deg)\n", encode_angle(gt.theta).c,
              decode_angle(encode_angle(gt.theta)));

  const QuadGrasp q = rect_to_polygon(gt);
  std::printf("corners:      ");
  for (const Vec2& v : q) std::printf("(%.1f, %.1f) ", v.x, v.y);
  std::printf("\n");

  std::printf("jaccard(pred, gt) = %.4f\n", jaccard(pred, gt));
  std::printf("angle distance    = %.1f deg\n", angle_distance(pred.theta, gt.theta));
  std::printf("rectangle metric  = %s\n", is_match(pred, gt) ? "match" : "miss");
  return 0;
}
