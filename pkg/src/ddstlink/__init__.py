"""Link-level MIMO-OFDM simulation toolkit for superimposed-training transmission.

Subpackages cover the complex-linear-algebra primitives (`numerics`), the
tapped-delay-line fading channel (`channel`), constellation/pilot/frame
construction (`phy`), LDPC coding (`coding`), model-based receivers
(`receivers`), the tensor-container exchange format (`container`), and the
Monte-Carlo sweep harness with its CLI (`harness`, `cli`).
"""

__version__ = "0.1.0"
