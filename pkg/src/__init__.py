# AdaFL federated-learning simulator
