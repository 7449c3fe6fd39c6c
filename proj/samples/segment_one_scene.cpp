// Trains a small model on a few generated rooms, segments a held-out room and
// scores it.
//
//   segment_one_scene [steps] [out.pc]

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "metricseg/metricseg.hpp"

using namespace metricseg;

int main(int argc, char** argv) {
  const std::size_t steps = argc > 1 ? std::stoul(argv[1]) : 300;
  PipelineConfig config;
  config.training.base_lr = 1e-3;

  std::vector<PointCloud> train;
  for (std::size_t i = 0; i < 16; ++i) train.push_back(generate_scene(scene_config_for(config, i)));
  PipelineConfig other = config;
  other.seed = 99;
  const PointCloud room = generate_scene(scene_config_for(other, 0));

  ModelState model = init_model(config.model, config.seed);
  for (std::size_t s = 0; s < steps; ++s) {
    const StepStats st = train_step(model, train, config);
    if (s % 50 == 0 || s + 1 == steps)
      std::printf("step %4zu  metric %.4f  semantic %.4f\n", s, st.metric_loss, st.semantic_loss);
  }

  const Segmentation seg = segment_cloud(model, config, room);
  std::printf("\n%zu points, %zu instances found\n", room.size(), seg.instances.size());
  std::printf("id class confidence voxels\n");
  std::map<int, double> conf;
  for (const auto& in : seg.instances) {
    std::printf("%2d %5d %10.3f %6zu\n", in.id, in.semantic, in.confidence, in.voxels);
    conf[in.id] = in.confidence;
  }

  const auto preds = predicted_instances(seg.cloud, 0, conf);
  const auto gts = ground_truth_instances(room, 0);
  const APReport rep = ap_average(preds, gts);
  std::printf("\nground truth instances %zu\n%s", gts.size(), format_report_table(rep).c_str());

  if (argc > 2) {
    write_cloud(argv[2], seg.cloud);
    write_text_file(instances_path(argv[2]), format_instances(seg.instances));
    std::printf("wrote %s\n", argv[2]);
  }
  return 0;
}
