/**
 * Backend selection.  The wasm backend is an order of magnitude faster
 * than the plain-JS cpu backend for convolutions but ships without the
 * convolution filter-gradient kernel, so one is registered here, built
 * from strided slices and matrix multiplies (which wasm does have).
 * Set TRAINER_BACKEND=cpu to force the reference backend.
 */

import * as tf from "@tensorflow/tfjs";
import { backend_util } from "@tensorflow/tfjs-core";

function registerConv2DBackpropFilter(): void {
  tf.registerKernel({
    kernelName: "Conv2DBackpropFilter",
    backendName: "wasm",
    kernelFunc: ({ inputs, attrs }) => {
      const anyAttrs = attrs as Record<string, unknown>;
      const dataFormat = (anyAttrs.dataFormat as string) ?? "NHWC";
      if (dataFormat !== "NHWC") {
        throw new Error(`Conv2DBackpropFilter: unsupported format ${dataFormat}`);
      }
      const filterShape = anyAttrs.filterShape as [number, number, number, number];
      const engine = tf.engine();
      const x = engine.makeTensorFromTensorInfo(
        (inputs as Record<string, tf.TensorInfo>).x,
      ) as tf.Tensor4D;
      const dy = engine.makeTensorFromTensorInfo(
        (inputs as Record<string, tf.TensorInfo>).dy,
      ) as tf.Tensor4D;
      const convInfo = backend_util.computeConv2DInfo(
        x.shape,
        filterShape,
        anyAttrs.strides as number | [number, number],
        1,
        anyAttrs.pad as "same" | "valid" | number,
        anyAttrs.dimRoundingMode as "floor" | "round" | "ceil" | undefined,
      );
      return tf.tidy(() => {
        const { top, bottom, left, right } = convInfo.padInfo;
        const { strideHeight, strideWidth, outHeight, outWidth } = convInfo;
        const [batch, , , inChannels] = x.shape;
        const outChannels = dy.shape[3];
        const padded = tf.pad(x, [
          [0, 0],
          [top, bottom],
          [left, right],
          [0, 0],
        ]);
        const flatDy = tf.reshape(dy, [batch * outHeight * outWidth, outChannels]);
        const pieces: tf.Tensor2D[] = [];
        for (let kh = 0; kh < filterShape[0]; kh++) {
          for (let kw = 0; kw < filterShape[1]; kw++) {
            const window = tf.stridedSlice(
              padded,
              [0, kh, kw, 0],
              [
                batch,
                kh + strideHeight * (outHeight - 1) + 1,
                kw + strideWidth * (outWidth - 1) + 1,
                inChannels,
              ],
              [1, strideHeight, strideWidth, 1],
            );
            const flatX = tf.reshape(window, [
              batch * outHeight * outWidth,
              inChannels,
            ]);
            pieces.push(tf.matMul(flatX, flatDy, true, false) as tf.Tensor2D);
          }
        }
        return tf.reshape(tf.stack(pieces, 0), filterShape);
      });
    },
  });
}

let initialization: Promise<string> | null = null;

/** Pick and prepare the compute backend once per process. */
export function initBackend(
  prefer: string | undefined = process.env.TRAINER_BACKEND,
): Promise<string> {
  if (initialization === null) {
    initialization = (async () => {
      tf.enableProdMode();
      const wanted = prefer ?? "wasm";
      if (wanted === "wasm") {
        try {
          await import("@tensorflow/tfjs-backend-wasm");
          registerConv2DBackpropFilter();
          if (await tf.setBackend("wasm")) {
            await tf.ready();
            return "wasm";
          }
        } catch (error) {
          console.warn(`wasm backend unavailable, using cpu: ${error}`);
        }
      }
      await tf.setBackend("cpu");
      await tf.ready();
      return "cpu";
    })();
  }
  return initialization;
}
