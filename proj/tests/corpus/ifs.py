from staircase import *


@mlir_func
def ifs(M: F64, N: F64):
    one = 1.0
    if M < N:
        two = constant(2.0)
        mem = MemRef.alloca([3, 3], F64)
    else:
        six = constant(6.0)
        mem = MemRef.alloca([7, 7], F64)
    return
