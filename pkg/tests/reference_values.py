"""Frozen reference numbers.

Coupled-oscillator levels were computed by a standalone numpy script that
shares no code with the package: normal frequencies from ``eigvalsh`` of
``T^1/2 V T^1/2`` followed by an exhaustive scan of the quantum-number
lattice below an energy bound.  Model: omega_j = sqrt(j/2), alpha = 0.1.
"""

COUPLED_D2_B10 = [
    0.8520824424318074, 1.5493892042821824, 1.8589405654450473, 2.2466959661325574,
    2.5562473272954223, 2.865798688458287, 2.9440027279829324, 3.2535540891457972,
    3.563105450308662, 3.6413094898333074,
]

COUPLED_D3_B10 = [
    1.462207016549704, 2.1555415579461132, 2.4543989522103167, 2.7010945725920905,
    2.8488760993425224, 3.147733493606726, 3.3944291139884997, 3.4465908878709293,
    3.542210640738931, 3.693286508252703,
]

COUPLED_D16_B20 = [
    15.662202020895828, 16.34243875487323, 16.636061857750402, 16.861440608448394,
    17.02267548885063, 17.051557605745614, 17.219177840821843, 17.3162985917278,
    17.370852630484144, 17.510482526683496, 17.541677342425793, 17.609921694604974,
    17.640621260624982, 17.702912222828033, 17.731794339723017, 17.763059976356935,
    17.835300445302966, 17.87912843052746, 17.899414574799245, 17.989871274691488,
]
