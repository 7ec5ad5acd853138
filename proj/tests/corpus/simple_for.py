from staircase import *


@mlir_func
def simple_for():
    for i in range(0, 42, 2):
        two_i = 3 * i
