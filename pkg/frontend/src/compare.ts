// Original-vs-reconstruction comparison slider with a mask overlay toggle.
// Images load straight from artifact URLs; the mask is alpha-composited on a
// canvas over whichever side is showing.

export interface CompareController {
  setSlider(fraction: number): void;
  toggleMask(show: boolean): void;
  load(originalUrl: string, reconUrl: string, maskUrl: string | null): void;
}

export function mountCompare(root: HTMLElement): CompareController {
  root.classList.add("compare");
  root.innerHTML = `
    <div class="compare-stage">
      <img class="compare-original" alt="original">
      <div class="compare-clip"><img class="compare-recon" alt="reconstruction"></div>
      <canvas class="compare-mask"></canvas>
      <div class="compare-divider"></div>
    </div>
    <div class="compare-controls">
      <input type="range" min="0" max="100" value="50" class="compare-slider">
      <label><input type="checkbox" class="compare-mask-toggle"> mask overlay</label>
    </div>`;

  const original = root.querySelector(".compare-original") as HTMLImageElement;
  const recon = root.querySelector(".compare-recon") as HTMLImageElement;
  const clip = root.querySelector(".compare-clip") as HTMLDivElement;
  const divider = root.querySelector(".compare-divider") as HTMLDivElement;
  const maskCanvas = root.querySelector(".compare-mask") as HTMLCanvasElement;
  const slider = root.querySelector(".compare-slider") as HTMLInputElement;
  const toggle = root.querySelector(".compare-mask-toggle") as HTMLInputElement;

  let maskImage: HTMLImageElement | null = null;
  let maskVisible = false;

  function redrawMask(): void {
    const ctx = maskCanvas.getContext("2d");
    if (!ctx) return;
    maskCanvas.width = original.naturalWidth || original.width;
    maskCanvas.height = original.naturalHeight || original.height;
    ctx.clearRect(0, 0, maskCanvas.width, maskCanvas.height);
    if (!maskVisible || !maskImage) return;
    ctx.globalAlpha = 0.45;
    ctx.drawImage(maskImage, 0, 0, maskCanvas.width, maskCanvas.height);
    ctx.globalCompositeOperation = "source-in";
    ctx.fillStyle = "rgb(245, 160, 50)";
    ctx.fillRect(0, 0, maskCanvas.width, maskCanvas.height);
    ctx.globalCompositeOperation = "source-over";
    ctx.globalAlpha = 1;
  }

  const controller: CompareController = {
    setSlider(fraction: number) {
      const pct = Math.round(Math.min(1, Math.max(0, fraction)) * 100);
      clip.style.width = `${pct}%`;
      divider.style.left = `${pct}%`;
    },
    toggleMask(show: boolean) {
      maskVisible = show;
      redrawMask();
    },
    load(originalUrl: string, reconUrl: string, maskUrl: string | null) {
      original.src = originalUrl;
      recon.src = reconUrl;
      original.onload = redrawMask;
      if (maskUrl) {
        maskImage = new Image();
        maskImage.onload = redrawMask;
        maskImage.onerror = () => {
          maskImage = null;
        };
        maskImage.src = maskUrl;
      } else {
        maskImage = null;
      }
    },
  };

  slider.addEventListener("input", () => {
    controller.setSlider(Number(slider.value) / 100);
  });
  toggle.addEventListener("change", () => controller.toggleMask(toggle.checked));
  controller.setSlider(0.5);
  return controller;
}
