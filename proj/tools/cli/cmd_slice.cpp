#include <fstream>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "cvsync/error.hpp"
#include "cvsync/mesh.hpp"
#include "exit_codes.hpp"

namespace cvsync::cli {

namespace {

struct SliceArgs {
  std::string model;
  std::vector<double> point{0.0, 0.0, 0.0};
  std::vector<double> normal{0.0, 0.0, 1.0};
  std::string keep = "positive";
  bool cap = false;
  std::string output;
  std::string sections;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

}  // namespace

Action register_slice(CLI::App& app) {
  auto args = std::make_shared<SliceArgs>();
  auto* sub = app.add_subcommand("slice", "Clip a mesh against a plane and report cross-section metrics");
  sub->add_option("model", args->model, "OBJ or STL file")->required();
  sub->add_option("--point", args->point, "A point on the plane: x,y,z")->delimiter(',')->expected(3)->required();
  sub->add_option("--normal", args->normal, "Plane normal: x,y,z")->delimiter(',')->expected(3)->required();
  sub->add_option("--keep", args->keep, "Half-space to keep")->check(CLI::IsMember({"positive", "negative"}));
  sub->add_flag("--cap", args->cap, "Close each cross-section with a fan of triangles");
  sub->add_option("-o,--output", args->output, "Clipped mesh as OBJ")->required();
  sub->add_option("--sections", args->sections, "Cross-section polylines as OBJ");

  return [args]() {
    const auto mesh = load_mesh_file(args->model);
    const auto plane =
        SlicePlane::make({args->point[0], args->point[1], args->point[2]},
                         {args->normal[0], args->normal[1], args->normal[2]},
                         args->keep == "positive" ? KeepSide::positive : KeepSide::negative);
    const auto result = slice_mesh(mesh, plane, args->cap);
    write_file(args->output, save_obj(result.mesh));
    if (!args->sections.empty()) write_file(args->sections, polylines_to_obj(result.cross_section));

    nlohmann::json j;
    j["input"] = {{"triangles", mesh.triangles.size()}, {"surface_area", surface_area(mesh)}};
    j["output"] = {{"path", args->output},
                   {"triangles", result.mesh.triangles.size()},
                   {"surface_area", surface_area(result.mesh)},
                   {"capped", args->cap}};
    nlohmann::json lines = nlohmann::json::array();
    std::size_t open = 0;
    for (const auto& p : result.cross_section) {
      if (!p.closed) ++open;
      lines.push_back({{"points", p.points.size()},
                       {"closed", p.closed},
                       {"length", p.length()},
                       {"enclosed_area", p.closed ? nlohmann::json(p.enclosed_area()) : nlohmann::json(nullptr)}});
    }
    j["cross_section"] = {{"polylines", std::move(lines)}, {"open", open}};
    std::cout << j.dump(2) << '\n';
    if (open > 0) {
      std::cerr << "warning: " << open << " open cross-section polyline(s); the mesh is not watertight\n";
    }
    return kOk;
  };
}

}  // namespace cvsync::cli
