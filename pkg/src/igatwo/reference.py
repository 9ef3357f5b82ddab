"""Published reference values used by ``igatwo reproduce``.

Factor tables are keyed by ``(p, block_size)``; iteration tables by
``(p, m)`` (square) or ``(p, m, column)`` with column ``"DS"`` or ``"MG"``
(annulus).
"""

from __future__ import annotations

BLOCKS = (9, 25, 49)

_RHO_2G = {
    2: (0.1234, 0.0813, 0.0604),
    3: (0.2150, 0.0874, 0.0622),
    4: (0.4581, 0.1294, 0.0697),
    5: (0.7095, 0.2690, 0.1001),
    6: (0.8786, 0.4549, 0.1909),
    7: (0.9576, 0.6623, 0.3260),
    8: (0.9868, 0.8278, 0.4885),
}
_RHO_H = {
    2: (0.1212, 0.0752, 0.0725),
    3: (0.2141, 0.0854, 0.0712),
    4: (0.4558, 0.1466, 0.0852),
    5: (0.7058, 0.2847, 0.1215),
    6: (0.8756, 0.4555, 0.2113),
    7: (0.9573, 0.6601, 0.3284),
    8: (0.9851, 0.8146, 0.4764),
}
_RHO_3G = {
    2: (0.1281, 0.0847, 0.0624),
    3: (0.2144, 0.0920, 0.0690),
    4: (0.4566, 0.1290, 0.0733),
    5: (0.7078, 0.2676, 0.0986),
    6: (0.8773, 0.4549, 0.1909),
    7: (0.9569, 0.6591, 0.3174),
    8: (0.9864, 0.8250, 0.4734),
}
_RHO_AG = {
    2: (0.1723, 0.1137, 0.0837),
    3: (0.2145, 0.1152, 0.0863),
    4: (0.4566, 0.1290, 0.0874),
    5: (0.7078, 0.2676, 0.0986),
    6: (0.8773, 0.4549, 0.1909),
    7: (0.9569, 0.6591, 0.3174),
    8: (0.9864, 0.8250, 0.4734),
}


def _by_block(rows):
    return {(p, b): v for p, vals in rows.items() for b, v in zip(BLOCKS, vals)}


RHO_2G = _by_block(_RHO_2G)
RHO_H = _by_block(_RHO_H)
RHO_3G = _by_block(_RHO_3G)
RHO_2G_AGGRESSIVE = _by_block(_RHO_AG)

# square domain, default block sizes, aggressive coarsening with a V-cycle
_SQUARE_IT = {
    64: (6, 6, 7, 5, 5, 4, 4),
    128: (6, 6, 7, 5, 5, 4, 4),
    256: (6, 6, 7, 5, 5, 5, 5),
    512: (6, 6, 7, 5, 5, 5, 5),
    1024: (6, 6, 7, 6, 5, 5, 5),
}
SQUARE_ITERATIONS = {(p, m): it for m, row in _SQUARE_IT.items() for p, it in zip(range(2, 9), row)}

# quarter annulus: (DS, MG) per degree 3..8
_ANNULUS_IT = {
    32: ((5, 5), (8, 8), (4, 4), (6, 6), (3, 3), (4, 4)),
    64: ((5, 7), (8, 8), (4, 5), (6, 6), (4, 4), (5, 5)),
    128: ((6, 8), (7, 8), (4, 6), (6, 6), (4, 5), (5, 5)),
    256: ((6, 9), (8, 8), (4, 6), (6, 6), (4, 6), (5, 6)),
}
ANNULUS_ITERATIONS = {
    (p, m, col): pair[k]
    for m, row in _ANNULUS_IT.items()
    for p, pair in zip(range(3, 9), row)
    for k, col in enumerate(("DS", "MG"))
}

FACTOR_TABLES = {1: RHO_2G, 2: RHO_3G, 3: RHO_2G_AGGRESSIVE}
FACTOR_TOLERANCE = 0.05
ITERATION_TOLERANCE = 1
DESK_MESHES = {4: (64, 128, 256), 5: (32, 64, 128)}
FULL_MESHES = {4: (64, 128, 256, 512, 1024), 5: (32, 64, 128, 256)}
