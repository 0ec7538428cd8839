"""Writes data/external/tiny_head.onnx and its descriptor.

The graph pools the 640x640 input to an 8x8 grid and maps the cell mean
through a 1x1 convolution, so objectness = -20 + 30 * mean(cell) and the
gray-mold logit is a constant 4. A white image lights up every cell, a black
one none.

    python3 tools/make_test_onnx.py data/external
"""
import json
import pathlib
import sys

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

STRIDE = 5 + 10


def build():
    w = np.zeros((STRIDE, 3, 1, 1), dtype=np.float32)
    w[4, :, 0, 0] = 10.0  # 30 * mean over three channels
    b = np.zeros(STRIDE, dtype=np.float32)
    b[4] = -20.0
    b[5:] = -4.0
    b[5 + 1] = 4.0
    nodes = [
        helper.make_node("AveragePool", ["images"], ["pooled"], kernel_shape=[80, 80], strides=[80, 80]),
        helper.make_node("Conv", ["pooled", "w", "b"], ["head_nchw"], kernel_shape=[1, 1]),
        helper.make_node("Transpose", ["head_nchw"], ["head"], perm=[0, 2, 3, 1]),
    ]
    graph = helper.make_graph(
        nodes,
        "tiny_head",
        [helper.make_tensor_value_info("images", TensorProto.FLOAT, [1, 3, 640, 640])],
        [helper.make_tensor_value_info("head", TensorProto.FLOAT, [1, 8, 8, STRIDE])],
        [numpy_helper.from_array(w, "w"), numpy_helper.from_array(b, "b")],
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    return model


def main(out):
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    onnx.save(build(), out / "tiny_head.onnx")
    descriptor = {
        "model": "tiny_head.onnx",
        "model_version": "tiny-head-1",
        "input": {"width": 640, "height": 640},
        "num_classes": 10,
        "scales": [{"grid_w": 8, "grid_h": 8, "anchors": [[0.25, 0.2]]}],
        "outputs": ["head"],
    }
    (out / "tiny_head.json").write_text(json.dumps(descriptor, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/external")
