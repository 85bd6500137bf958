def segment(image):
    return image > image.mean()
