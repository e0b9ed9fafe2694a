#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "einopt/autodiff.hpp"
#include "einopt/executor.hpp"
#include "einopt/graph.hpp"
#include "einopt/optimizer.hpp"
#include "einopt/tensor.hpp"

namespace py = pybind11;
using namespace einopt;

namespace {

// NodePtr aliases shared_ptr<const Node>, which pybind11 cannot use as a
// class holder; a thin value wrapper carries it across the boundary instead
struct PyNode {
  NodePtr ptr;
};

std::vector<NodePtr> unwrap(const std::vector<PyNode>& xs) {
  std::vector<NodePtr> out;
  out.reserve(xs.size());
  for (auto& x : xs) out.push_back(x.ptr);
  return out;
}

std::vector<PyNode> wrap(const std::vector<NodePtr>& xs) {
  std::vector<PyNode> out;
  out.reserve(xs.size());
  for (auto& x : xs) out.push_back({x});
  return out;
}

using CArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseTensor tensor_from_array(const CArray& a) {
  Shape shape(static_cast<size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  std::vector<double> data(a.data(), a.data() + a.size());
  return DenseTensor(std::move(shape), std::move(data));
}

py::array_t<double> tensor_to_array(const DenseTensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

FeedDict feed_from_dict(const py::dict& d) {
  FeedDict feed;
  for (auto item : d)
    feed[py::cast<std::string>(item.first)] =
        tensor_from_array(py::cast<CArray>(item.second));
  return feed;
}

}  // namespace

PYBIND11_MODULE(_einopt, m) {
  m.doc() = "einsum graph compiler: IR, autodiff, optimizer, executor";

  // translators run newest-first, so derived exceptions register after bases
  py::register_exception<GraphError>(m, "GraphError", PyExc_ValueError);
  py::register_exception<AutodiffError>(m, "AutodiffError", PyExc_ValueError);
  py::register_exception<ExecError>(m, "ExecError", PyExc_RuntimeError);
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", PyExc_RuntimeError);

  py::class_<PyNode>(m, "Node")
      .def_property_readonly("kind",
                             [](const PyNode& n) { return std::string(kind_name(n.ptr->kind)); })
      .def_property_readonly("uid", [](const PyNode& n) { return n.ptr->uid; })
      .def_property_readonly("name", [](const PyNode& n) { return n.ptr->name; })
      .def_property_readonly("shape", [](const PyNode& n) { return n.ptr->shape; })
      .def_property_readonly("inputs", [](const PyNode& n) { return wrap(n.ptr->inputs); })
      .def("__repr__", [](const PyNode& n) {
        return "<Node " + std::string(kind_name(n.ptr->kind)) + " " +
               shape_to_string(n.ptr->shape) + ">";
      });

  py::class_<Graph>(m, "Graph")
      .def(py::init([](const std::vector<PyNode>& sinks) { return Graph(unwrap(sinks)); }),
           py::arg("sinks"))
      .def_property_readonly("sinks", [](const Graph& g) { return wrap(g.sinks); })
      .def("node_count", &Graph::node_count);

  // graph construction
  m.def("variable",
        [](const std::string& name, Shape shape) {
          return PyNode{variable(name, std::move(shape))};
        },
        py::arg("name"), py::arg("shape"));
  m.def("constant", [](const CArray& a) { return PyNode{constant(tensor_from_array(a))}; });
  m.def("zeros", [](const Shape& s) { return PyNode{zeros(s)}; });
  m.def("identity", [](int64_t extent) { return PyNode{identity(extent)}; }, py::arg("extent"));
  m.def("einsum", [](const std::string& subscripts, const std::vector<PyNode>& inputs) {
    return PyNode{make_einsum(subscripts, unwrap(inputs))};
  });
  m.def("add", [](const PyNode& a, const PyNode& b) { return PyNode{add(a.ptr, b.ptr)}; });
  m.def("add_n", [](const std::vector<PyNode>& xs) { return PyNode{add(unwrap(xs))}; });
  m.def("sub", [](const PyNode& a, const PyNode& b) { return PyNode{sub(a.ptr, b.ptr)}; });
  m.def("negate", [](const PyNode& a) { return PyNode{negate(a.ptr)}; });
  m.def("scalar_mul", [](double c, const PyNode& a) { return PyNode{scalar_mul(c, a.ptr)}; });
  m.def("scalar_inverse", [](const PyNode& a) { return PyNode{scalar_inverse(a.ptr)}; });
  m.def("tensor_inverse", [](const PyNode& a) { return PyNode{tensor_inverse(a.ptr)}; });
  m.def("transpose", [](const PyNode& a, std::vector<int> perm) {
    return PyNode{transpose(a.ptr, std::move(perm))};
  });
  m.def("clone", [](const PyNode& a) { return PyNode{clone(a.ptr)}; });
  m.def("tensordot", [](const PyNode& a, const PyNode& b) {
    return PyNode{tensordot(a.ptr, b.ptr)};
  });

  // serialization
  m.def("serialize", [](const Graph& g) { return serialize(g); });
  m.def("deserialize", [](const std::string& text) { return deserialize(text); });
  m.def("to_dot", [](const Graph& g) { return to_dot(g); });
  m.def("structurally_equal", &structurally_equal);

  // autodiff
  m.def("gradients",
        [](const PyNode& output, const std::vector<PyNode>& wrt) {
          return wrap(gradients(output.ptr, unwrap(wrt)));
        },
        py::arg("output"), py::arg("wrt"));
  m.def("vjp",
        [](const PyNode& v, const PyNode& output, const PyNode& wrt) {
          return PyNode{vjp(v.ptr, output.ptr, wrt.ptr)};
        },
        py::arg("v"), py::arg("output"), py::arg("wrt"));
  m.def("jvp",
        [](const PyNode& v, const PyNode& output, const PyNode& wrt) {
          return PyNode{jvp(v.ptr, output.ptr, wrt.ptr)};
        },
        py::arg("v"), py::arg("output"), py::arg("wrt"));
  m.def("hvp",
        [](const PyNode& output, const PyNode& wrt, const PyNode& v) {
          return PyNode{hvp(output.ptr, wrt.ptr, v.ptr)};
        },
        py::arg("output"), py::arg("wrt"), py::arg("v"));
  m.def("jacobian",
        [](const PyNode& output, const std::vector<PyNode>& wrt) {
          return wrap(jacobian(output.ptr, unwrap(wrt)));
        },
        py::arg("output"), py::arg("wrt"));
  m.def("hessian",
        [](const PyNode& output, const std::vector<PyNode>& wrt) {
          std::vector<std::vector<PyNode>> out;
          for (auto& row : hessian(output.ptr, unwrap(wrt))) out.push_back(wrap(row));
          return out;
        },
        py::arg("output"), py::arg("wrt"));

  // optimizer
  m.def("optimize", [](const Graph& g) {
    PassReport report;
    Graph out = optimize(g, &report);
    return py::make_tuple(out, report.to_json());
  });
  m.def("distribute", [](const Graph& g) { return distribute(g); });
  m.def("fuse_einsums", [](const Graph& g) { return fuse_einsums(g); });
  m.def("decompose_inverse", [](const Graph& g) { return decompose_inverse(g); });
  m.def("prune_identity", [](const Graph& g) { return prune_identity(g); });
  m.def("prune_inverse", [](const Graph& g) { return prune_inverse(g); });
  m.def("normalize_algebra", [](const Graph& g) { return normalize_algebra(g); });
  m.def("cse", [](const Graph& g) { return cse(g); });
  m.def("flop_estimate", [](const Graph& g) { return flop_estimate(g); });
  m.def("generate_dimension_tree",
        [](const std::vector<PyNode>& update_nodes, const std::vector<PyNode>& site_order) {
          return wrap(generate_dimension_tree(unwrap(update_nodes), unwrap(site_order)));
        },
        py::arg("update_nodes"), py::arg("site_order"));
  m.def("count_einsums_touching", [](const Graph& g, const PyNode& input) {
    return count_einsums_touching(g, input.ptr);
  });

  // execution
  m.def("evaluate", [](const PyNode& node, const py::dict& feed) {
    return tensor_to_array(evaluate(node.ptr, feed_from_dict(feed)));
  });
  m.def("run", [](const Graph& g, const py::dict& feed) {
    Executor exec(g.sinks);
    std::vector<py::array_t<double>> out;
    for (auto& t : exec.run(feed_from_dict(feed))) out.push_back(tensor_to_array(t));
    return out;
  });

  py::class_<CounterRng>(m, "CounterRng")
      .def(py::init<uint64_t>(), py::arg("seed"))
      .def("uniform", &CounterRng::uniform)
      .def("tensor", [](CounterRng& rng, const Shape& shape) {
        return tensor_to_array(rng.tensor(shape));
      });
}
