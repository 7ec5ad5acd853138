from staircase import *


@mlir_func
def scale(x: F64, buf: MemRef[(4,), F64]):
    y = emit_op("toy.scale", [x], results=[F64], attrs={"factor": 2.0})
    for i in range(4):
        buf[i] = y + x
