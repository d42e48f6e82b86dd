# Large-margin softmax speaker embeddings
