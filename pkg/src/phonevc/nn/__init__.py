"""Neural network modules: encoders, prior/posterior networks, flow, vocoder."""
