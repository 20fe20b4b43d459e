package org.demo.canvas.paint;

public interface Paint {
    String describe();

    boolean isOpaque();
}
