"""Building, checking and optimizing networks with the numpy engine."""

# %%
import numpy as np

from decade import Adam, LayerSpec, Network, Tensor, gradient_check

# A network is a list of layer specs plus an input shape. Shapes are checked
# when it is built, and a seed initializes the weights (Glorot uniform).
specs = [
    LayerSpec.conv2d(3, 4, 3, padding=1),
    LayerSpec.relu(),
    LayerSpec.maxpool2d(2),
    LayerSpec.flatten(),
    LayerSpec.dense(4 * 4 * 4, 1),
]
net = Network(specs, input_shape=(3, 8, 8), name="toy", seed=0)
print(net)

x = np.random.default_rng(1).standard_normal((5, 3, 8, 8)).astype(np.float32)
print("output shape:", net(x).shape)

# %%
# Backprop against central differences, in float64.
y = np.zeros(5)
print("max relative gradient error:", gradient_check(net, x, y, include_input=True))

# %%
# Adam drives f(w) = |w|^2 to zero.
w = Tensor(np.random.default_rng(2).standard_normal(10))
opt = Adam([w], learning_rate=0.01)
for step in range(1, 2001):
    w.grad = 2 * w.data
    opt.step()
    if step % 250 == 0:
        print(f"step {step:4d}  |w| = {np.linalg.norm(w.data):.2e}")
